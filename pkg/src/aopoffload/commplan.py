"""Communication planning: RAT preselection along a route, rate models,
connection selection and per-class link traffic volumes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissionError, DomainError

REASON_OK = "ok"
REASON_LOCAL = "local feasible"
REASON_NO_COVERAGE = "no RAT in coverage"
REASON_NO_DWELL = "no dwell-feasible RAT"


@dataclass(frozen=True)
class RatPlanEntry:
    rat_id: str
    kind: str
    perp_distance: float      # d~, meters off the route line
    remaining_distance: float  # d, along-route distance to the RAT's foot point
    preselect_prob: float      # chi in [0, 1]
    dwell_time: float          # coverage / speed, seconds
    angle: float               # radians in [0, pi/2]
    geo_distance: float        # g, straight-line distance
    entry_distance: float = 0.0  # distance still to drive before entering coverage

    @property
    def in_coverage(self) -> bool:
        return self.entry_distance <= 0.0


@dataclass(frozen=True)
class ConnectionChoice:
    eta_wifi: int = 0
    eta_cell: int = 0
    offload: int = 0
    fraction: float = 0.0
    rate: float = 0.0
    rat_id: str | None = None
    reason: str = REASON_OK

    def __post_init__(self):
        if self.eta_wifi + self.eta_cell > 1:
            raise DomainError("at most one connection may be active")
        if self.offload and self.eta_wifi + self.eta_cell != 1:
            raise DomainError("an offload needs exactly one active connection")


def preselect_probability(perp_distance: float, coverage: float) -> float:
    """Three-case rule: 1 on the line, d~/gamma inside coverage, 0 beyond."""
    if perp_distance == 0.0:
        return 1.0
    if 0.0 < perp_distance < coverage:
        return perp_distance / coverage
    return 0.0


def plan_geometry(g: float, alpha: float, coverage: float, speed: float, rat_id="", kind="") -> RatPlanEntry:
    if not coverage > 0:
        raise DomainError("coverage must be positive")
    if not speed > 0:
        raise DomainError("speed must be positive")
    perp = g * math.sin(alpha)
    along = g * math.cos(alpha)
    # clamp rounding noise so d~, d >= 0 hold exactly
    perp = 0.0 if abs(perp) < 1e-12 * max(g, 1.0) else abs(perp)
    along = abs(along)
    return RatPlanEntry(
        rat_id=rat_id, kind=kind, perp_distance=perp, remaining_distance=along,
        preselect_prob=preselect_probability(perp, coverage), dwell_time=coverage / speed,
        angle=alpha, geo_distance=g, entry_distance=max(0.0, g - coverage / 2.0),
    )


def route_geometry(vehicle, rat, t: float = 0.0) -> RatPlanEntry:
    """Plan entry for ``rat`` seen from the vehicle's position and heading at time ``t``."""
    pos = vehicle.position_at(t)
    heading = vehicle.heading_at(t)
    ray = np.asarray(rat.position, dtype=np.float64) - pos
    g = float(np.hypot(ray[0], ray[1]))
    if g == 0.0:
        alpha = 0.0
    else:
        cos_a = abs(float(np.dot(heading, ray)) / g)
        alpha = math.acos(min(1.0, cos_a))  # acute angle between route line and the ray
    return plan_geometry(g, alpha, rat.coverage_m, vehicle.speed_mps, rat.id, rat.kind)


def contention(n: int, slope: float = 0.05) -> float:
    """Decreasing Wi-Fi contention factor xi(n) = 1 / (1 + slope (n - 1))."""
    return 1.0 / (1.0 + slope * (n - 1))


def wifi_rate(rat, n_connected: int, xi_slope: float = 0.05, xi=None) -> float:
    if n_connected < 1:
        raise DomainError("wifi rate needs at least one connected vehicle")
    factor = xi(n_connected) if xi is not None else contention(n_connected, xi_slope)
    return rat.efficiency * rat.max_rate_bps * factor / n_connected


def spectral_efficiency(snr: float) -> float:
    return math.log2(1.0 + snr)


def channel_gain_ref(tx_power_w: float, noise_w: float, snr_ref_db: float = 20.0, ref_distance_m: float = 100.0,
                     exponent: float = 4.0) -> float:
    """g0 such that ``tx * g0 * d_ref**-exponent / noise`` equals the reference SNR."""
    if noise_w <= 0:
        raise DomainError("noise power must be positive")
    return 10 ** (snr_ref_db / 10.0) * noise_w * ref_distance_m ** exponent / tx_power_w


def snr_at(distance_m: float, tx_power_w: float, noise_w: float, g0: float, exponent: float = 4.0) -> float:
    if noise_w <= 0:
        raise DomainError("noise power must be positive")
    d = max(float(distance_m), 1.0)
    return tx_power_w * g0 * d ** (-exponent) / noise_w


def cellular_rate_from_snr(snr: float, fraction: float, bandwidth_hz: float):
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("bandwidth fraction must lie in [0, 1]")
    eff = spectral_efficiency(snr)
    return eff, fraction * bandwidth_hz * eff


def cellular_rate(vehicle, rat, fraction: float, distance_m: float, g0: float | None = None,
                  exponent: float = 4.0, snr_ref_db: float = 20.0, ref_distance_m: float = 100.0):
    """(spectral efficiency, rate) for a vehicle ``distance_m`` from a cellular RAT."""
    if vehicle.noise_w <= 0:
        raise DomainError("noise power must be positive")
    if g0 is None:
        g0 = channel_gain_ref(vehicle.tx_power_w, vehicle.noise_w, snr_ref_db, ref_distance_m, exponent)
    snr = snr_at(distance_m, vehicle.tx_power_w, vehicle.noise_w, g0, exponent)
    return cellular_rate_from_snr(snr, fraction, rat.bandwidth_hz)


def dwell_ok(entry: RatPlanEntry, deadline_s: float, rule: str = "paper") -> bool:
    """Dwell gate.  ``paper``: t <= deadline.  ``within_dwell``: deadline <= t."""
    if rule == "paper":
        return entry.dwell_time <= deadline_s
    if rule == "within_dwell":
        return deadline_s <= entry.dwell_time
    raise DomainError(f"unknown dwell rule {rule!r}")


def gate(entry: RatPlanEntry, deadline_s: float, rule: str = "paper") -> bool:
    return entry.in_coverage and entry.preselect_prob > 0.0 and dwell_ok(entry, deadline_s, rule)


def select_rat(plan, task, rates: dict, offload_needed: bool = True, dwell_rule: str = "paper",
               fractions: dict | None = None) -> ConnectionChoice:
    """Pick Wi-Fi or cellular for the offload.

    ``rates`` maps rat id to the achievable rate.  Wi-Fi wins only on a strictly
    higher rate; cellular takes ties.  RATs failing the dwell gate are skipped
    so the vehicle can move on to the next one.
    """
    fractions = fractions or {}
    covering = [e for e in plan if e.in_coverage and e.preselect_prob > 0.0]
    if not covering:
        return ConnectionChoice(reason=REASON_NO_COVERAGE)
    usable = [e for e in covering if dwell_ok(e, task.deadline_s, dwell_rule) and rates.get(e.rat_id, 0.0) > 0]
    if not usable:
        return ConnectionChoice(reason=REASON_NO_DWELL)
    if not offload_needed:
        return ConnectionChoice(reason=REASON_LOCAL)

    def best(kind_wifi):
        cands = [e for e in usable if (e.kind == "wifi") == kind_wifi]
        if not cands:
            return None, 0.0
        e = max(cands, key=lambda c: (rates[c.rat_id], -cands.index(c)))
        return e, rates[e.rat_id]

    w, w_rate = best(True)
    c, c_rate = best(False)
    if c is not None and c_rate >= w_rate:
        return ConnectionChoice(0, 1, 1, fractions.get(c.rat_id, 1.0), c_rate, c.rat_id)
    return ConnectionChoice(1, 0, 1, fractions.get(w.rat_id, 1.0), w_rate, w.rat_id)


# ---------------------------------------------------------------------------
# traffic volumes

@dataclass(frozen=True)
class Assignment:
    vehicle: int
    x: int
    y_sr: int = 0
    y_rj: int = 0
    y_rc: int = 0
    size_bits: float = 0.0
    rat: str | None = None     # rat id carrying the uplink
    ec: str | None = None      # serving EC id
    neighbor: str | None = None

    def check(self):
        ys = self.y_sr + self.y_rj + self.y_rc
        if self.x == 1 and ys != 1:
            raise DomainError(f"vehicle {self.vehicle}: offloaded task needs exactly one execution site")
        if self.x == 0 and ys != 0:
            raise DomainError(f"vehicle {self.vehicle}: execution site set on a local task")
        if self.x not in (0, 1):
            raise DomainError(f"vehicle {self.vehicle}: offload flag must be 0 or 1")


@dataclass
class LinkLoads:
    rho_A: float = 0.0
    rho_B: float = 0.0
    rho_C: float = 0.0
    per_link: dict = field(default_factory=dict)   # (class, u, v) -> bits
    forwarded: dict = field(default_factory=dict)  # serving EC id -> bits leaving it

    def peak(self, cls: str) -> float:
        vals = [b for (c, _, _), b in self.per_link.items() if c == cls]
        return max(vals) if vals else 0.0


def traffic_volumes(assignments, topology=None, slot_s: float = 1.0, enforce_admission: bool = True) -> LinkLoads:
    """Aggregate per-class volumes with the indicator algebra.

    A bits: x s_d.  B bits: (1 - y_sr) x s_d.  C bits: (1 - y_sr - y_rj) x s_d.
    RC offloads from EC r are admitted only if r's forwarded volume fits the
    backhaul within the slot.
    """
    loads = LinkLoads()
    rc_at = set()
    for asg in assignments:
        asg.check()
        s = asg.size_bits * asg.x
        loads.rho_A += s
        loads.rho_B += (1 - asg.y_sr) * s
        loads.rho_C += (1 - asg.y_sr - asg.y_rj) * s
        if not asg.x:
            continue
        if asg.rat is not None:
            key = ("A", asg.rat, asg.ec)
            loads.per_link[key] = loads.per_link.get(key, 0.0) + s
        if asg.y_rj or asg.y_rc:
            loads.forwarded[asg.ec] = loads.forwarded.get(asg.ec, 0.0) + s
        if asg.y_rj:
            u, v = sorted((asg.ec, asg.neighbor))
            key = ("B", u, v)
            loads.per_link[key] = loads.per_link.get(key, 0.0) + s
        if asg.y_rc:
            key = ("C", asg.ec, "RC")
            loads.per_link[key] = loads.per_link.get(key, 0.0) + s
            rc_at.add(asg.ec)
    if enforce_admission and topology is not None:
        for ec_id in rc_at:
            r = topology.ec_index(ec_id)
            cap = float(topology.backhaul_bps[r]) * slot_s
            if loads.forwarded.get(ec_id, 0.0) > cap * (1 + 1e-9):
                raise AdmissionError(f"RC offload from EC {ec_id}: forwarded volume "
                                     f"{loads.forwarded[ec_id]:.4g} bits exceeds backhaul {cap:.4g} bits")
    return loads
