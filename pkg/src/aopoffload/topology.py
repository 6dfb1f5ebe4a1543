"""Physical network model: edge clouds, RATs, the regional cloud, vehicles and links.

Edge-server sites come from a CSV with header ``SITE_ID,LATITUDE,LONGITUDE``
(an optional ``SITE_TYPE`` column is carried along).  Coordinates are projected
to local planar meters with an equirectangular projection about the centroid.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, substream
from .errors import ConfigError, DomainError, ParseError

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
RAT_KINDS = ("wifi", "ru", "oru")
LINK_CLASSES = ("A", "B", "C")  # fronthaul/Y2, inter-EC, backhaul


@dataclass
class EdgeCloud:
    id: str
    position: np.ndarray
    cpu_hz: float
    site_type: str = ""
    # peer id -> (available cycles/s, slot of last update)
    resource_table: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cpu_hz > 0:
            raise DomainError(f"EC {self.id}: cpu capacity must be positive")
        if not np.all(np.isfinite(self.position)):
            raise DomainError(f"EC {self.id}: non-finite position")


@dataclass(frozen=True)
class Rat:
    id: str
    kind: str
    position: np.ndarray
    coverage_m: float
    attached_ec: int
    fronthaul_bps: float
    bandwidth_hz: float = 0.0     # cellular kinds
    max_rate_bps: float = 0.0     # wifi
    efficiency: float = 1.0

    def __post_init__(self):
        if self.kind not in RAT_KINDS:
            raise DomainError(f"RAT {self.id}: unknown kind {self.kind!r}")
        if not self.coverage_m > 0:
            raise DomainError(f"RAT {self.id}: coverage must be positive")
        if not 0.0 < self.efficiency <= 1.0:
            raise DomainError(f"RAT {self.id}: efficiency outside (0, 1]")

    @property
    def is_wifi(self) -> bool:
        return self.kind == "wifi"


@dataclass(frozen=True)
class RegionalCloud:
    cpu_hz: float
    position: np.ndarray

    def __post_init__(self):
        if not self.cpu_hz > 0:
            raise DomainError("RC cpu capacity must be positive")


@dataclass(frozen=True)
class Link:
    u: str
    v: str
    cls: str
    capacity_bps: float
    length_m: float
    prop_speed_mps: float = 2e8

    @property
    def prop_delay_s(self) -> float:
        return self.length_m / self.prop_speed_mps


@dataclass
class Vehicle:
    id: int
    route: np.ndarray           # (k, 2) polyline, meters
    speed_mps: float
    cpu_hz: float
    energy_budget_j: float
    tx_power_w: float
    noise_w: float
    nu: float = 1e-26
    local_wait_s: float = 0.5

    def __post_init__(self):
        self.route = np.asarray(self.route, dtype=np.float64)
        if not self.speed_mps > 0:
            raise DomainError(f"vehicle {self.id}: speed must be positive")
        if not self.cpu_hz > 0:
            raise DomainError(f"vehicle {self.id}: cpu must be positive")
        if self.energy_budget_j < 0:
            raise DomainError(f"vehicle {self.id}: negative energy budget")
        if self.route.ndim != 2 or self.route.shape[0] < 2 or self.route.shape[1] != 2:
            raise DomainError(f"vehicle {self.id}: route needs at least two planar points")

    def _locate(self, t: float):
        """Segment index and arc offset at time t; runs past the end on the last segment."""
        seg = np.diff(self.route, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        s = self.speed_mps * t
        cum = np.concatenate(([0.0], np.cumsum(lens)))
        k = int(np.searchsorted(cum, s, side="right") - 1)
        k = min(max(k, 0), len(lens) - 1)
        while lens[k] == 0 and k < len(lens) - 1:
            k += 1
        return k, s - cum[k], seg[k], lens[k]

    def position_at(self, t: float) -> np.ndarray:
        k, off, seg, length = self._locate(t)
        if length == 0:
            return self.route[k].copy()
        return self.route[k] + seg * (off / length)

    def heading_at(self, t: float) -> np.ndarray:
        k, _, seg, length = self._locate(t)
        if length == 0:
            raise DomainError(f"vehicle {self.id}: zero-length route segment")
        return seg / length


@dataclass(frozen=True)
class Task:
    size_bits: float
    deadline_s: float
    workload_cpb: float
    created_at: float = 0.0

    def __post_init__(self):
        if not (self.size_bits > 0 and self.deadline_s > 0 and self.workload_cpb > 0):
            raise DomainError("task size, deadline and workload must be positive")

    @property
    def cycles(self) -> float:
        return self.size_bits * self.workload_cpb


@dataclass
class NetworkTopology:
    edge_clouds: list
    rats: list
    regional_cloud: RegionalCloud
    inter_ec_bps: np.ndarray      # (R, R) symmetric, drawn once for every pair
    backhaul_bps: np.ndarray      # (R,)
    prop_speed_mps: float = 2e8
    collab_spaces: list = field(default_factory=list)
    cs_of: np.ndarray | None = None
    links: list = field(default_factory=list)

    def __post_init__(self):
        self._index = {ec.id: i for i, ec in enumerate(self.edge_clouds)}
        if len(self._index) != len(self.edge_clouds):
            raise DomainError("duplicate edge cloud ids")
        self.links = self._build_links()

    # -- geometry helpers
    @property
    def n_ec(self) -> int:
        return len(self.edge_clouds)

    @property
    def ec_positions(self) -> np.ndarray:
        return np.array([ec.position for ec in self.edge_clouds], dtype=np.float64).reshape(-1, 2)

    @property
    def ec_cpu(self) -> np.ndarray:
        return np.array([ec.cpu_hz for ec in self.edge_clouds])

    def ec_index(self, ec) -> int:
        if isinstance(ec, (int, np.integer)):
            if not 0 <= ec < self.n_ec:
                raise DomainError(f"EC index {ec} out of range")
            return int(ec)
        try:
            return self._index[ec]
        except KeyError:
            raise DomainError(f"unknown EC {ec!r}") from None

    def ec_distance(self, r: int, j: int) -> float:
        return float(np.linalg.norm(self.edge_clouds[r].position - self.edge_clouds[j].position))

    def rc_distance(self, r: int) -> float:
        return float(np.linalg.norm(self.edge_clouds[r].position - self.regional_cloud.position))

    def rc_distances(self) -> np.ndarray:
        return np.linalg.norm(self.ec_positions - self.regional_cloud.position, axis=1)

    def same_cs(self, r: int, j: int) -> bool:
        if self.cs_of is None:
            return False
        return bool(self.cs_of[r] == self.cs_of[j])

    # -- links
    def _build_links(self) -> list:
        links = []
        for rat in self.rats:
            ec = self.edge_clouds[rat.attached_ec]
            h = float(np.linalg.norm(rat.position - ec.position))
            links.append(Link(rat.id, ec.id, "A", rat.fronthaul_bps, h, self.prop_speed_mps))
        n = self.n_ec
        for r in range(n):
            for j in range(r + 1, n):
                if self.cs_of is not None and self.cs_of[r] != self.cs_of[j]:
                    continue
                links.append(Link(self.edge_clouds[r].id, self.edge_clouds[j].id, "B",
                                  float(self.inter_ec_bps[r, j]), self.ec_distance(r, j), self.prop_speed_mps))
        for r, ec in enumerate(self.edge_clouds):
            links.append(Link(ec.id, "RC", "C", float(self.backhaul_bps[r]), self.rc_distance(r), self.prop_speed_mps))
        return links

    def links_by_class(self) -> dict:
        out = {c: [] for c in LINK_CLASSES}
        for link in self.links:
            out[link.cls].append(link)
        return out

    def assign_collaboration_spaces(self, spaces) -> "NetworkTopology":
        """Install a partition of the ECs; inter-EC links become intra-space only."""
        cs_of = np.full(self.n_ec, -1, dtype=np.int64)
        for c, space in enumerate(spaces):
            for m in space.members:
                m = self.ec_index(m)
                if cs_of[m] >= 0:
                    raise DomainError(f"EC {self.edge_clouds[m].id} is in two collaboration spaces")
                cs_of[m] = c
        if np.any(cs_of < 0):
            missing = [self.edge_clouds[i].id for i in np.flatnonzero(cs_of < 0)]
            raise DomainError(f"ECs without a collaboration space: {missing[:5]}")
        self.collab_spaces = list(spaces)
        self.cs_of = cs_of
        for r, ec in enumerate(self.edge_clouds):
            ec.resource_table = {
                self.edge_clouds[j].id: (self.edge_clouds[j].cpu_hz, -1)
                for j in np.flatnonzero(cs_of == cs_of[r]) if j != r
            }
        self.links = self._build_links()
        return self

    def cs_members(self, r: int) -> np.ndarray:
        if self.cs_of is None:
            raise DomainError("topology has not been clustered")
        return np.flatnonzero(self.cs_of == self.cs_of[r])

    # -- output
    def summary_records(self) -> list[str]:
        """Line-delimited JSON records, one per entity, in a fixed order."""

        def r6(x):
            return round(float(x), 6)

        rows = []
        for ec in self.edge_clouds:
            rows.append({"entity": "ec", "id": ec.id, "x": r6(ec.position[0]), "y": r6(ec.position[1]),
                         "cpu_hz": r6(ec.cpu_hz), "site_type": ec.site_type,
                         "cs": None if self.cs_of is None else int(self.cs_of[self.ec_index(ec.id)])})
        for rat in self.rats:
            rows.append({"entity": "rat", "id": rat.id, "kind": rat.kind, "x": r6(rat.position[0]),
                         "y": r6(rat.position[1]), "coverage_m": r6(rat.coverage_m),
                         "ec": self.edge_clouds[rat.attached_ec].id, "fronthaul_bps": r6(rat.fronthaul_bps),
                         "bandwidth_hz": r6(rat.bandwidth_hz), "max_rate_bps": r6(rat.max_rate_bps)})
        rc = self.regional_cloud
        rows.append({"entity": "rc", "x": r6(rc.position[0]), "y": r6(rc.position[1]), "cpu_hz": r6(rc.cpu_hz)})
        for link in self.links:
            rows.append({"entity": "link", "class": link.cls, "u": link.u, "v": link.v,
                         "capacity_bps": r6(link.capacity_bps), "length_m": r6(link.length_m)})
        return [json.dumps(r, sort_keys=True) for r in rows]


# ---------------------------------------------------------------------------
# dataset ingest

def project_equirectangular(lat, lon, lat0=None, lon0=None):
    """Lat/lon degrees to planar meters about (lat0, lon0), the centroid by default."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    lat0 = float(np.mean(lat)) if lat0 is None else lat0
    lon0 = float(np.mean(lon)) if lon0 is None else lon0
    x = np.radians(lon - lon0) * math.cos(math.radians(lat0)) * EARTH_RADIUS_M
    y = np.radians(lat - lat0) * EARTH_RADIUS_M
    return np.column_stack((x, y))


def haversine_m(lat1, lon1, lat2, lon2) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def read_sites(source) -> tuple[list[str], np.ndarray, np.ndarray, list[str]]:
    """Parse a site CSV (path or text) into ids, latitudes, longitudes, site types."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        path = Path(source)
        if not path.exists():
            raise ParseError(f"dataset not found: {source}")
        text = path.read_text()
    else:
        text = str(source)
    reader = csv.reader(io.StringIO(text))
    header = None
    ids, lats, lons, types = [], [], [], []
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip().upper() for c in row]
            for col in ("SITE_ID", "LATITUDE", "LONGITUDE"):
                if col not in header:
                    raise ParseError(f"missing column {col}", line=lineno)
            continue
        if len(row) < len(header) - ("SITE_TYPE" in header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        rec = dict(zip(header, (c.strip() for c in row)))
        try:
            lat = float(rec["LATITUDE"])
            lon = float(rec["LONGITUDE"])
        except (KeyError, ValueError):
            raise ParseError("latitude/longitude not numeric", line=lineno) from None
        if not (-90 <= lat <= 90 and -180 <= lon <= 180) or not rec.get("SITE_ID"):
            raise ParseError("coordinates out of range or empty id", line=lineno)
        ids.append(rec["SITE_ID"])
        lats.append(lat)
        lons.append(lon)
        types.append(rec.get("SITE_TYPE", ""))
    if header is None or not ids:
        raise ParseError("dataset has no site rows")
    return ids, np.array(lats), np.array(lons), types


def _draw(rng, rng_range, size=None):
    lo, hi = rng_range
    return rng.uniform(lo, hi, size=size)


def build_topology(ids, positions, config: ScenarioConfig, seed: int | None = None, site_types=None,
                   rat_sites=None, rat_kinds=None) -> NetworkTopology:
    """Construct a topology from planar EC positions.

    RAT sites default to a seeded sample of EC sites; each RAT attaches to the
    nearest EC.  Capacities are drawn from the configured ranges.
    """
    seed = config.seed if seed is None else seed
    rng = substream(seed, "topology")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    n = len(ids)
    if n == 0:
        raise ConfigError("no edge clouds")
    if not np.all(np.isfinite(positions)):
        raise DomainError("non-finite EC position")
    site_types = site_types or [""] * n

    ec_cpu = _draw(rng, config.ec_cpu_hz, n)
    ecs = [EdgeCloud(str(ids[i]), positions[i].copy(), float(ec_cpu[i]), site_types[i]) for i in range(n)]

    if rat_kinds is None:
        rat_kinds = ["wifi"] * config.n_wifi + ["ru"] * config.n_ru + ["oru"] * config.n_oru
    n_rat = len(rat_kinds)
    if rat_sites is None:
        if n_rat > n:
            raise ConfigError(f"{n_rat} RATs requested but only {n} edge clouds available")
        rat_sites = positions[rng.choice(n, size=n_rat, replace=False)] if n_rat else np.zeros((0, 2))
    rat_sites = np.asarray(rat_sites, dtype=np.float64).reshape(-1, 2)
    if len(rat_sites) != n_rat:
        raise ConfigError("rat_sites and rat_kinds differ in length")

    rats = []
    for k, (kind, pos) in enumerate(zip(rat_kinds, rat_sites)):
        d = np.hypot(*(positions - pos).T)
        attached = int(np.argmin(d))  # ties: lowest index
        wifi = kind == "wifi"
        cov = _draw(rng, config.wifi_coverage_m if wifi else config.cell_coverage_m)
        bw = 0.0 if wifi else _draw(rng, config.cell_bandwidth_hz)
        rats.append(Rat(
            id=f"{kind}-{k}", kind=kind, position=pos.copy(), coverage_m=float(cov), attached_ec=attached,
            fronthaul_bps=float(_draw(rng, config.fronthaul_bps)), bandwidth_hz=float(bw),
            max_rate_bps=config.wifi_max_rate_bps if wifi else 0.0,
            efficiency=config.wifi_efficiency if wifi else 1.0,
        ))

    upper = _draw(rng, config.inter_ec_bps, (n, n))
    inter = np.triu(upper, 1)
    inter = inter + inter.T
    backhaul = _draw(rng, config.backhaul_bps, n)

    centre = positions.mean(axis=0)
    rc = RegionalCloud(float(_draw(rng, config.rc_cpu_hz)), centre + np.array([config.rc_distance_m, 0.0]))
    return NetworkTopology(ecs, rats, rc, inter, backhaul, config.prop_speed_mps)


def load_topology(dataset_path, config: ScenarioConfig, seed: int | None = None) -> NetworkTopology:
    ids, lat, lon, types = read_sites(Path(dataset_path))
    positions = project_equirectangular(lat, lon)
    return build_topology(ids, positions, config, seed=seed, site_types=types)


def update_resource_table(topology: NetworkTopology, ec_id, peer_id, available_cycles: float,
                          slot: int) -> NetworkTopology:
    """Record a peer's advertised headroom; stale slots are ignored."""
    r = topology.ec_index(ec_id)
    j = topology.ec_index(peer_id)
    if available_cycles < 0:
        raise DomainError("available cycles must be non-negative")
    if not topology.same_cs(r, j):
        raise DomainError(f"EC {topology.edge_clouds[j].id} is not in the collaboration space of "
                          f"{topology.edge_clouds[r].id}")
    table = topology.edge_clouds[r].resource_table
    key = topology.edge_clouds[j].id
    prev = table.get(key)
    if prev is not None and slot < prev[1]:
        log.debug("stale resource update %s->%s slot %s < %s", ec_id, peer_id, slot, prev[1])
        return topology
    table[key] = (float(available_cycles), int(slot))
    return topology


def synthetic_sites(n: int = 125, seed: int = 0) -> str:
    """CSV text for a synthetic CBD-like layout, a stand-in when no dataset is supplied.

    Sites are drawn around a handful of dense blocks on a ~2 km square grid,
    centred near (-37.8136, 144.9631).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 99]))
    lat0, lon0 = -37.8136, 144.9631
    n_blocks = 8
    block_xy = rng.uniform(-1200, 1200, size=(n_blocks, 2))
    which = rng.integers(0, n_blocks, size=n)
    xy = block_xy[which] + rng.normal(0, 180, size=(n, 2))
    lat = lat0 + np.degrees(xy[:, 1] / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(xy[:, 0] / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    lines = ["SITE_ID,LATITUDE,LONGITUDE,SITE_TYPE"]
    lines += [f"S{i:04d},{lat[i]:.7f},{lon[i]:.7f},synthetic" for i in range(n)]
    return "\n".join(lines) + "\n"
