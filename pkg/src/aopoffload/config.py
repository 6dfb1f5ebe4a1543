"""Scenario configuration: defaults, validation and an INI-style text format.

The document is flat key/value pairs grouped into one section per module::

    [scenario]
    vehicle_count = 50
    task_size_mb = 40, 200

Ranges are written as two comma-separated numbers (low, high).  Missing keys
take the defaults below: a 125-server metro layout with 24 RATs, 27 dBm
transmit power and the link/CPU ranges of a CBD deployment.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError

Range = tuple[float, float]


def _f(section, default, doc=""):
    return field(default=default, metadata={"section": section, "doc": doc})


@dataclass(frozen=True)
class ScenarioConfig:
    # topology
    n_sites: int = _f("topology", 125, "edge servers in the synthetic stand-in layout")
    n_wifi: int = _f("topology", 6)
    n_ru: int = _f("topology", 5)
    n_oru: int = _f("topology", 13)
    wifi_coverage_m: Range = _f("topology", (150.0, 300.0), "coverage diameter along the route")
    cell_coverage_m: Range = _f("topology", (500.0, 1000.0))
    wifi_max_rate_bps: float = _f("topology", 3.5e9)
    wifi_efficiency: float = _f("topology", 0.8)
    cell_bandwidth_hz: Range = _f("topology", (25e6, 32e6))
    fronthaul_bps: Range = _f("topology", (2000e6, 2500e6))
    inter_ec_bps: Range = _f("topology", (3000e6, 3500e6))
    backhaul_bps: Range = _f("topology", (3000e6, 4500e6))
    ec_cpu_hz: Range = _f("topology", (3.0e9, 3.5e9))
    rc_cpu_hz: Range = _f("topology", (3.0e9, 4.5e9))
    rc_distance_m: float = _f("topology", 10_000.0)
    prop_speed_mps: float = _f("topology", 2e8)

    # clustering
    cluster_method: str = _f("clustering", "apacs")
    damping: float = _f("clustering", 0.5)
    preference: str = _f("clustering", "median", "'median' or a number")
    max_iters: int = _f("clustering", 300)
    convergence_window: int = _f("clustering", 15)
    kmeans_k_max: int = _f("clustering", 15)
    refine_exemplars: bool = _f("clustering", True, "add/drop/swap local search after message passing")

    # commplan
    xi_slope: float = _f("commplan", 0.05, "xi(n) = 1 / (1 + slope (n - 1))")
    snr_ref_db: float = _f("commplan", 20.0)
    snr_ref_distance_m: float = _f("commplan", 100.0)
    path_loss_exponent: float = _f("commplan", 4.0)
    tx_power_dbm: float = _f("commplan", 27.0)
    noise_power_w: float = _f("commplan", 1e-13)
    dwell_rule: str = _f("commplan", "within_dwell", "'within_dwell' or 'paper'")
    bandwidth_rule: str = _f("commplan", "equal_split", "'equal_split' or 'deadline'")

    # compute
    nu: float = _f("compute", 1e-26)
    local_wait_s: float = _f("compute", 0.5)
    vehicle_cpu_hz: Range = _f("compute", (2.0e9, 3.0e9))
    energy_budget_j: Range = _f("compute", (50.0, 500.0))
    compute_rule: str = _f("compute", "deadline", "'deadline' or 'full'")
    neighbor_candidates: int = _f("compute", 6)

    # scenario
    vehicle_count: int = _f("scenario", 50)
    task_size_mb: Range = _f("scenario", (40.0, 200.0))
    deadline_s: Range = _f("scenario", (0.02, 1.0))
    workload_cpb: Range = _f("scenario", (250.0, 9990.0))
    speed_mps: Range = _f("scenario", (4.35, 8.63))
    slot_s: float = _f("scenario", 1.0)
    redraw_tasks: bool = _f("scenario", True)
    idle_data_growth: float = _f("scenario", 1.0, "extra task size per second of idle before sampling, as a fraction")

    # aop
    sampling: str = _f("aop", "zero_wait")
    uniform_bounds: Range = _f("aop", (0.0, 1.0))
    beta_shape: Range = _f("aop", (2.0, 5.0))
    horizon: int = _f("aop", 200)
    replications: int = _f("aop", 10)

    # optimizer
    epsilon: float = _f("optimizer", 1e-4)
    max_outer: int = _f("optimizer", 200)
    eta0: float = _f("optimizer", 0.1)
    state_bins: int = _f("optimizer", 10)

    # sim
    seed: int = _f("sim", 0)
    ack_size_bytes: float = _f("sim", 1024.0)
    decision: str = _f("sim", "solver")

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def tx_power_w(self) -> float:
        return 10 ** (self.tx_power_dbm / 10.0) / 1000.0

    def digest(self) -> str:
        return hashlib.sha256(emit_config(self).encode()).hexdigest()


_CHOICES = {
    "cluster_method": ("apacs", "kmeans"),
    "dwell_rule": ("within_dwell", "paper"),
    "bandwidth_rule": ("equal_split", "deadline"),
    "compute_rule": ("deadline", "full"),
    "sampling": ("zero_wait", "random", "uniform", "beta"),
    "decision": ("solver", "total_delay", "heuristic", "local", "ec", "rc"),
}


def _is_range(f) -> bool:
    return f.type in ("Range", Range) or str(f.type) == "Range"


def validate(cfg: ScenarioConfig) -> None:
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if _is_range(f):
            lo, hi = value
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ConfigError(f"{f.name}: range bounds must be finite")
            if lo > hi:
                raise ConfigError(f"{f.name}: range inverted ({lo} > {hi})")
            if lo < 0:
                raise ConfigError(f"{f.name}: negative bound {lo}")
    for name, allowed in _CHOICES.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(f"{name} must be one of {allowed}, got {getattr(cfg, name)!r}")
    if cfg.preference != "median":
        try:
            float(cfg.preference)
        except ValueError:
            raise ConfigError(f"preference must be 'median' or a number, got {cfg.preference!r}") from None
    if not 1 <= cfg.vehicle_count <= 10_000:
        raise ConfigError(f"vehicle_count {cfg.vehicle_count} outside [1, 10000]")
    for name in ("n_sites", "max_iters", "convergence_window", "kmeans_k_max", "horizon",
                 "replications", "max_outer", "state_bins"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive")
    for name in ("n_wifi", "n_ru", "n_oru", "neighbor_candidates"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be non-negative")
    if not 0.0 <= cfg.damping < 1.0:
        raise ConfigError("damping must lie in [0, 1)")
    if not 0.0 < cfg.wifi_efficiency <= 1.0:
        raise ConfigError("wifi_efficiency must lie in (0, 1]")
    for name in ("slot_s", "prop_speed_mps", "noise_power_w", "eta0", "wifi_max_rate_bps", "nu"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.epsilon < 0:
        raise ConfigError("epsilon must be non-negative")
    if cfg.idle_data_growth < 0:
        raise ConfigError("idle_data_growth must be non-negative")
    if cfg.task_size_mb[0] <= 0 or cfg.deadline_s[0] <= 0 or cfg.workload_cpb[0] <= 0:
        raise ConfigError("task size, deadline and workload must be positive")
    if cfg.speed_mps[0] <= 0 or cfg.vehicle_cpu_hz[0] <= 0:
        raise ConfigError("speed and vehicle cpu must be positive")


def valid_keys() -> list[str]:
    return [f.name for f in fields(ScenarioConfig)]


def _parse_value(f, raw: str):
    raw = raw.strip()
    if _is_range(f):
        parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
        if len(parts) != 2:
            raise ConfigError(f"{f.name}: expected 'low, high', got {raw!r}")
        return (float(parts[0]), float(parts[1]))
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if t == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: not a boolean: {raw!r}")
    if t == "int":
        number = float(raw)
        if not number.is_integer():
            raise ConfigError(f"{f.name}: expected an integer, got {raw!r}")
        return int(number)
    if t == "float":
        return float(raw)
    return raw


def parse_config_text(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    by_name = {f.name: f for f in fields(ScenarioConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            f = by_name.get(key)
            if f is None or f.metadata["section"] != section:
                expected = sorted(n for n, g in by_name.items() if g.metadata["section"] == section)
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; valid keys: "
                    + (", ".join(expected) if expected else ", ".join(sorted(by_name)))
                )
            try:
                values[key] = _parse_value(f, raw)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return ScenarioConfig(**values)


def parse_config(path) -> ScenarioConfig:
    """Read a config document; a missing file is an error, an empty one gives defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return f"{value[0]!r}, {value[1]!r}"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def emit_config(cfg: ScenarioConfig) -> str:
    sections: dict[str, list[str]] = {}
    for f in fields(cfg):
        sections.setdefault(f.metadata["section"], []).append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    out = io.StringIO()
    for name, lines in sections.items():
        out.write(f"[{name}]\n")
        out.write("\n".join(lines))
        out.write("\n\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# seeded substreams

_STREAMS = {"topology": 1, "tasks": 2, "sampling": 3, "solver": 4, "vehicles": 5, "clustering": 6}


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named purpose derived from one root seed."""
    if name not in _STREAMS:
        raise KeyError(f"unknown stream {name!r}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name], *map(int, extra)]))
