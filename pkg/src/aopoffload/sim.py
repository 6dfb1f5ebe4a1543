"""End-to-end scenario runs.

Each slot i (length ``slot_s``) every vehicle draws a fresh task.  The slot is
also the update index: the decision made in slot i produces update i of the
vehicle's age timeline, with the vehicle's position evaluated at ``i * slot_s``.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import aop, clustering, commplan, compute, optimizer
from .config import ScenarioConfig, substream
from .errors import AopOffloadError, ConfigError, ConstraintError, DomainError
from .topology import NetworkTopology, Task, Vehicle, build_topology, load_topology, read_sites, \
    project_equirectangular, synthetic_sites, update_resource_table

log = logging.getLogger(__name__)

MB_BITS = 8e6
MAX_RATS_PER_VEHICLE = 3
LOCATIONS = ("local", "ec", "neighbor", "rc")
DECISIONS = ("solver", "total_delay", "heuristic", "oracle", "fixed")


# ---------------------------------------------------------------------------
# setup

def cluster_topology(topology: NetworkTopology, config: ScenarioConfig):
    pts = topology.ec_positions
    if config.cluster_method == "kmeans":
        k_max = min(config.kmeans_k_max, len(pts))
        _, labels, _ = clustering.kmeans_elbow(pts, k_max, seed=config.seed)
        spaces = []
        for c in np.unique(labels):
            members = np.flatnonzero(labels == c)
            centre = pts[members].mean(axis=0)
            cec = int(members[np.argmin(np.hypot(*(pts[members] - centre).T))])
            spaces.append(clustering.CollaborationSpace(cec, tuple(int(m) for m in members)))
    else:
        pref = config.preference if config.preference == "median" else float(config.preference)
        res = clustering.run_apacs(pts, config.max_iters, config.damping, pref, config.convergence_window,
                                   refine=config.refine_exemplars)
        if not res.converged:
            log.warning("APACS hit max_iters=%d without a stable partition", config.max_iters)
        spaces = res.spaces
    topology.assign_collaboration_spaces(spaces)
    return topology


def prepare_topology(config: ScenarioConfig, dataset=None, seed: int | None = None) -> NetworkTopology:
    """Load (or synthesise) the site layout, build the network and cluster it."""
    seed = config.seed if seed is None else seed
    if dataset is not None:
        topo = load_topology(dataset, config, seed=seed)
    else:
        ids, lat, lon, types = read_sites(synthetic_sites(config.n_sites, seed=seed))
        topo = build_topology(ids, project_equirectangular(lat, lon), config, seed=seed, site_types=types)
    return cluster_topology(topo, config)


@dataclass
class Scenario:
    config: ScenarioConfig
    topology: NetworkTopology
    vehicles: list
    start: np.ndarray      # (V, 2)
    direction: np.ndarray  # (V, 2) unit vectors
    seed: int
    g0: float
    neighbors: list = field(repr=False, default_factory=list)
    ec_dist: np.ndarray = field(repr=False, default=None)
    _tasks: dict = field(repr=False, default_factory=dict)

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)

    @property
    def speeds(self) -> np.ndarray:
        return np.array([v.speed_mps for v in self.vehicles])

    def positions(self, t: float) -> np.ndarray:
        return self.start + self.direction * (self.speeds * t)[:, None]

    def task_table(self, horizon: int):
        """Per-vehicle task fields for slots 0..horizon-1, prefix-consistent in horizon."""
        cfg = self.config
        out = {}
        for name, rng_range, scale, fid in (("size", cfg.task_size_mb, MB_BITS, 0),
                                            ("deadline", cfg.deadline_s, 1.0, 1),
                                            ("workload", cfg.workload_cpb, 1.0, 2)):
            rows = []
            for v in range(self.n_vehicles):
                g = substream(self.seed, "tasks", v, fid)
                n = horizon if cfg.redraw_tasks else 1
                draws = g.uniform(*rng_range, size=n) * scale
                if not cfg.redraw_tasks:
                    draws = np.repeat(draws, horizon)
                rows.append(draws)
            out[name] = np.array(rows).reshape(self.n_vehicles, horizon)
        return out

    def task(self, v: int, slot: int) -> Task:
        key = slot + 1
        if self._tasks.get("horizon", 0) < key:
            self._tasks = {"horizon": max(key, 2 * self._tasks.get("horizon", 0)),
                           "table": self.task_table(max(key, 2 * self._tasks.get("horizon", 0)))}
        tab = self._tasks["table"]
        return Task(float(tab["size"][v, slot]), float(tab["deadline"][v, slot]),
                    float(tab["workload"][v, slot]), created_at=slot * self.config.slot_s)


def _neighbor_lists(topology: NetworkTopology, k: int) -> list:
    rc_d = topology.rc_distances()
    out = []
    pos = topology.ec_positions
    for r in range(topology.n_ec):
        members = [j for j in topology.cs_members(r) if j != r]
        d = np.hypot(*(pos[members] - pos[r]).T) if members else np.zeros(0)
        cand = sorted((float(dj), int(j)) for dj, j in zip(d, members) if dj < rc_d[r])
        out.append([j for _, j in cand[:k]])
    return out


def generate_scenario(config: ScenarioConfig, topology: NetworkTopology, seed: int | None = None) -> Scenario:
    """Seeded vehicles on straight routes that pass through a random RAT."""
    if not 1 <= config.vehicle_count <= 10_000:
        raise ConfigError(f"vehicle count {config.vehicle_count} outside [1, 10000]")
    if topology.cs_of is None:
        raise ConfigError("topology must be clustered before generating a scenario")
    if not topology.rats:
        raise ConfigError("topology has no RATs")
    seed = config.seed if seed is None else seed
    rng = substream(seed, "vehicles")
    V = config.vehicle_count
    vehicles, starts, dirs = [], [], []
    for v in range(V):
        rat = topology.rats[int(rng.integers(len(topology.rats)))]
        theta = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(theta), np.sin(theta)])
        back = rng.uniform(0.0, rat.coverage_m / 2)
        start = rat.position - d * back
        speed = rng.uniform(*config.speed_mps)
        cpu = rng.uniform(*config.vehicle_cpu_hz)
        budget = rng.uniform(*config.energy_budget_j)
        route = np.vstack((start, start + d * 1e5))
        vehicles.append(Vehicle(v, route, speed, cpu, budget, config.tx_power_w, config.noise_power_w,
                                config.nu, config.local_wait_s))
        starts.append(start)
        dirs.append(d)
    g0 = commplan.channel_gain_ref(config.tx_power_w, config.noise_power_w, config.snr_ref_db,
                                   config.snr_ref_distance_m, config.path_loss_exponent)
    pos = topology.ec_positions
    ec_dist = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    return Scenario(config, topology, vehicles, np.array(starts), np.array(dirs), seed, g0,
                    _neighbor_lists(topology, config.neighbor_candidates), ec_dist)


# ---------------------------------------------------------------------------
# per-slot stage construction

@dataclass
class SlotContext:
    tasks: list
    local: list
    stage: optimizer.Stage
    choices: list           # per vehicle: list of dicts describing each action
    serving_default: np.ndarray


def _rat_arrays(topology):
    rats = topology.rats
    return (np.array([r.position for r in rats]), np.array([r.coverage_m for r in rats]),
            np.array([r.is_wifi for r in rats]), np.array([r.attached_ec for r in rats]),
            np.array([r.fronthaul_bps for r in rats]), np.array([r.bandwidth_hz for r in rats]))


def admissible_rats(scn: Scenario, t: float, deadlines: np.ndarray):
    """(V, S) admissibility mask and distances at time t."""
    cfg = scn.config
    rat_pos, cov, _, _, _, _ = _rat_arrays(scn.topology)
    pos = scn.positions(t)
    ray = rat_pos[None, :, :] - pos[:, None, :]
    g = np.hypot(ray[..., 0], ray[..., 1])
    cos_a = np.abs(np.einsum("vk,vsk->vs", scn.direction, ray)) / np.where(g > 0, g, 1.0)
    perp = g * np.sqrt(np.clip(1.0 - cos_a ** 2, 0.0, 1.0))
    chi = np.where(perp == 0, 1.0, np.where(perp < cov[None, :], perp / cov[None, :], 0.0))
    entry = np.maximum(0.0, g - cov[None, :] / 2)
    dwell = cov[None, :] / scn.speeds[:, None]
    if cfg.dwell_rule == "paper":
        dw = dwell <= deadlines[:, None]
    else:
        dw = deadlines[:, None] <= dwell
    return (entry <= 0) & (chi > 0) & dw, g


def build_slot(scn: Scenario, slot: int, L_prev, N_prev, N_next, objective: str = "aop") -> SlotContext:
    """Decision problem for one slot.  A task sampled after an idle wait of
    ``N_prev`` carries ``1 + idle_data_growth * N_prev`` times its base size."""
    cfg = scn.config
    topo = scn.topology
    t = slot * cfg.slot_s
    V = scn.n_vehicles
    tasks = [scn.task(v, slot) for v in range(V)]
    if cfg.idle_data_growth:
        tasks = [Task(tk.size_bits * (1.0 + cfg.idle_data_growth * float(n)), tk.deadline_s, tk.workload_cpb,
                      tk.created_at) for tk, n in zip(tasks, N_prev)]
    local = [compute.local_compute(veh, task) for veh, task in zip(scn.vehicles, tasks)]
    deadlines = np.array([tk.deadline_s for tk in tasks])
    adm, dist = admissible_rats(scn, t, deadlines)
    rat_pos, cov, wifi, attached, fronthaul, bw = _rat_arrays(topo)
    n_cover = adm.sum(axis=0)
    snr_ref = 10 ** (cfg.snr_ref_db / 10)
    snr = snr_ref * (cfg.snr_ref_distance_m / np.maximum(dist, 1.0)) ** cfg.path_loss_exponent

    ec_cpu = topo.ec_cpu
    rc_cpu = topo.regional_cloud.cpu_hz
    rc_d = topo.rc_distances()
    kappa = topo.prop_speed_mps
    n_ec = topo.n_ec

    actions, choices = [], []
    nearest_ec = np.argmin(np.hypot(*(topo.ec_positions[None, :, :] - scn.positions(t)[:, None, :]).transpose(2, 0, 1)), axis=1)
    for v, (task, lo) in enumerate(zip(tasks, local)):
        acts = [optimizer.ActionSpec("local", lo.total_local_s, label="local")]
        meta = [{"kind": "local"}]
        s_d = task.size_bits
        demand = s_d * task.workload_cpb / task.deadline_s
        ss = np.flatnonzero(adm[v])
        rates = {}
        for s in ss:
            n = int(n_cover[s])
            if wifi[s]:
                full = topo.rats[s].efficiency * topo.rats[s].max_rate_bps * commplan.contention(n, cfg.xi_slope)
            else:
                full = bw[s] * commplan.spectral_efficiency(snr[v, s])
            if cfg.bandwidth_rule == "equal_split":
                a = 1.0 / n
            else:
                a = min(1.0, s_d / (task.deadline_s * full))
            rates[s] = (a, a * full)
        ranked = sorted(ss, key=lambda s: (-rates[s][1], s))[:MAX_RATS_PER_VEHICLE]
        for s in ranked:
            a, rate = rates[s]
            if rate <= 0:
                continue
            tx = compute.offload_tx_delay(s_d, rate, fronthaul[s])
            r = int(attached[s])

            def reserve(cap):
                return min(cap, demand) if cfg.compute_rule == "deadline" else cap

            p_abs = reserve(ec_cpu[r])
            acts.append(optimizer.ActionSpec("ec", tx + task.cycles / p_abs, rat=int(s), node=r, a=a,
                                             p=p_abs / ec_cpu[r], label=f"ec:{topo.rats[s].id}->{r}"))
            meta.append({"kind": "ec", "rat": int(s), "r": r, "tx": tx, "rate": rate})
            for j in scn.neighbors[r]:
                p_abs = reserve(ec_cpu[j])
                h = scn.ec_dist[r, j]
                lat = tx + s_d / topo.inter_ec_bps[r, j] + h / kappa + task.cycles / p_abs
                acts.append(optimizer.ActionSpec("neighbor", lat, rat=int(s), node=j, serving=r, a=a,
                                                 p=p_abs / ec_cpu[j], target=j, label=f"nb:{r}->{j}"))
                meta.append({"kind": "neighbor", "rat": int(s), "r": r, "j": j, "tx": tx, "rate": rate})
            p_abs = reserve(rc_cpu)
            lat = tx + s_d / topo.backhaul_bps[r] + rc_d[r] / kappa + task.cycles / p_abs
            acts.append(optimizer.ActionSpec("rc", lat, rat=int(s), node=n_ec, serving=r, a=a,
                                             p=p_abs / rc_cpu, label=f"rc:{r}"))
            meta.append({"kind": "rc", "rat": int(s), "r": r, "tx": tx, "rate": rate})
        actions.append(acts)
        choices.append(meta)
    bits = np.array([tk.size_bits for tk in tasks])
    stage = optimizer.Stage(actions, len(topo.rats), n_ec + 1, bits, topo.backhaul_bps * cfg.slot_s,
                            L_prev, N_prev, N_next, objective)
    return SlotContext(tasks, local, stage, choices, nearest_ec)


# ---------------------------------------------------------------------------
# execution

@dataclass
class Executed:
    kind: np.ndarray        # location code per vehicle
    latency: np.ndarray
    serving: np.ndarray     # EC index whose backhaul carries the ack, per vehicle
    rat_load: np.ndarray
    node_load: np.ndarray   # cycles/s per node (ECs then RC)
    link_peak: dict


def _realize(scn: Scenario, ctx: SlotContext, choice, alloc: str = "reserve") -> Executed:
    """Latency of the chosen actions with aggregated hop loads.

    ``alloc='reserve'`` gives each task its planned reservation; ``'share'``
    splits each node workload-proportionally among the tasks placed on it.
    """
    topo = scn.topology
    cfg = scn.config
    V = scn.n_vehicles
    n_ec = topo.n_ec
    kind = np.zeros(V, dtype=np.int64)
    lat = np.zeros(V)
    serving = ctx.serving_default.copy()
    rat_load = np.zeros(len(topo.rats))
    node_load = np.zeros(n_ec + 1)
    b_load, c_load, a_load = {}, {}, {}
    placed = {}
    for v, k in enumerate(choice):
        act = ctx.stage.actions[v][k]
        meta = ctx.choices[v][k]
        kind[v] = optimizer.KIND_CODES[act.kind]
        if act.kind == "local":
            lat[v] = act.latency
            continue
        s = meta["rat"]
        r = meta["r"]
        serving[v] = r
        rat_load[s] += act.a
        a_load[(s, r)] = a_load.get((s, r), 0.0) + ctx.tasks[v].size_bits
        placed.setdefault(act.node, []).append(v)
        if act.kind == "neighbor":
            key = tuple(sorted((r, meta["j"])))
            b_load[key] = b_load.get(key, 0.0) + ctx.tasks[v].size_bits
        elif act.kind == "rc":
            c_load[r] = c_load.get(r, 0.0) + ctx.tasks[v].size_bits
    caps = np.concatenate((topo.ec_cpu, [topo.regional_cloud.cpu_hz]))
    for e, vs in placed.items():
        if alloc == "share":
            shares = compute.ec_allocation(caps[e], [ctx.tasks[v].workload_cpb for v in vs])
        else:
            shares = [ctx.stage.actions[v][choice[v]].p * caps[e] for v in vs]
        for v, p_abs in zip(vs, shares):
            node_load[e] += p_abs
            act = ctx.stage.actions[v][choice[v]]
            meta = ctx.choices[v][choice[v]]
            task = ctx.tasks[v]
            r = meta["r"]
            if act.kind == "ec":
                out = compute.remote_exec_time("b", task, meta["tx"], p_abs)
            elif act.kind == "neighbor":
                j = meta["j"]
                out = compute.remote_exec_time("c", task, meta["tx"], p_abs, topology=topo, r=r, j=j,
                                               hop_bits=b_load[tuple(sorted((r, j)))])
            else:
                out = compute.remote_exec_time("d", task, meta["tx"], p_abs, topology=topo, r=r,
                                               hop_bits=c_load[r])
            lat[v] = out.total_s
    peak = {"A": max(a_load.values(), default=0.0), "B": max(b_load.values(), default=0.0),
            "C": max(c_load.values(), default=0.0)}
    return Executed(kind, lat, serving, rat_load, node_load, peak)


def _violations(scn: Scenario, ex: Executed, tol: float = 1e-9) -> int:
    caps = np.concatenate((scn.topology.ec_cpu, [scn.topology.regional_cloud.cpu_hz]))
    return int(np.sum(ex.rat_load > 1 + tol) + np.sum(ex.node_load > caps * (1 + tol)))


def _heuristic_choice(scn: Scenario, ctx: SlotContext, slot: int):
    """Rule-based baseline: local when feasible, else the best-rate RAT to the serving EC,
    redirecting to an idle neighbor (per resource tables) or the RC when the share is too small."""
    topo = scn.topology
    V = scn.n_vehicles
    choice = np.zeros(V, dtype=np.int64)
    by_r = {}
    for v in range(V):
        if ctx.local[v].feasible:
            continue
        ec_k = [k for k, m in enumerate(ctx.choices[v]) if m["kind"] == "ec"]
        if not ec_k:
            continue
        k = ec_k[0]  # actions are ranked by rate
        choice[v] = k
        by_r.setdefault(ctx.choices[v][k]["r"], []).append(v)
    caps = topo.ec_cpu
    used = np.zeros(topo.n_ec)
    for r, vs in sorted(by_r.items()):
        shares = compute.ec_allocation(caps[r], [ctx.tasks[v].workload_cpb for v in vs])
        used[r] += caps[r]
        for v, share in zip(vs, shares):
            if not compute.needs_redirect(ctx.tasks[v], share) or len(vs) == 1:
                continue
            rat = ctx.choices[v][choice[v]]["rat"]
            table = topo.edge_clouds[r].resource_table
            demand = ctx.tasks[v].size_bits * ctx.tasks[v].workload_cpb / ctx.tasks[v].deadline_s
            for k, m in enumerate(ctx.choices[v]):
                if m["kind"] == "neighbor" and m["rat"] == rat:
                    j = m["j"]
                    avail = table.get(topo.edge_clouds[j].id, (0.0, -1))[0] - used[j]
                    if avail >= min(demand, caps[j]):
                        choice[v] = k
                        used[j] += min(demand, caps[j])
                        break
            else:
                continue
    for r in range(topo.n_ec):
        for j in topo.cs_members(r):
            if j != r:
                update_resource_table(topo, r, int(j), max(0.0, caps[j] - used[j]), slot)
    return choice


def _fixed_choice(ctx: SlotContext, kind: str):
    choice = np.zeros(len(ctx.choices), dtype=np.int64)
    for v, metas in enumerate(ctx.choices):
        ks = [k for k, m in enumerate(metas) if m["kind"] == kind]
        if ks:
            choice[v] = ks[0]
    return choice


def _policy_choice(ctx: SlotContext, policy: optimizer.Policy, L_prev, N_next):
    choice = np.zeros(len(ctx.choices), dtype=np.int64)
    for v, metas in enumerate(ctx.choices):
        est = min(a.latency for a in ctx.stage.actions[v])
        want = policy.action(v, policy.state(L_prev[v], N_next[v], est))
        ks = [k for k, m in enumerate(metas) if m["kind"] == want]
        if ks:
            choice[v] = min(ks, key=lambda k: ctx.stage.actions[v][k].latency)
    return choice


@dataclass
class Metrics:
    policy: str
    sampling: str
    vehicle_count: int
    seed: int
    horizon: int
    aav: np.ndarray
    mean_delay: float
    mean_offload_delay: float
    violation_rate: float
    histogram: dict
    peak_loads: dict
    constraint_violations: int
    mean_gap: float = 0.0
    ack_delay_mean: float = 0.0
    per_vehicle: list = field(default_factory=list, repr=False)

    @property
    def mean_aav(self) -> float:
        return float(np.mean(self.aav))

    @property
    def ec_share(self) -> float:
        """Work kept inside the collaboration space: serving EC plus neighbor EC."""
        return self.histogram["ec"] + self.histogram["neighbor"]

    def row(self, replication: int = 0) -> dict:
        return {
            "replication": replication, "vehicle_count": self.vehicle_count, "policy": self.policy,
            "sampling_kind": self.sampling, "seed": self.seed, "horizon": self.horizon,
            "mean_aav": self.mean_aav, "std_aav": float(np.std(self.aav)),
            "mean_delay": self.mean_delay, "mean_offload_delay": self.mean_offload_delay,
            "violation_rate": self.violation_rate,
            **{f"share_{k}": self.histogram[k] for k in LOCATIONS},
            **{f"peak_{c}": self.peak_loads[c] for c in "ABC"},
            "constraint_violations": self.constraint_violations, "mean_gap": self.mean_gap,
        }


def run_scenario(scn: Scenario, decision: str = "solver", horizon: int | None = None, sampling: str | None = None,
                 asspo: bool = False, ack_delay: float | None = None, policy: optimizer.Policy | None = None,
                 fixed_kind: str = "local", max_outer: int | None = None, record_policy: bool = False,
                 strict: bool = True, polish_passes: int = 2, objective: str | None = None):
    """Slot loop: plan, decide, execute, record.  Returns Metrics (and the learnt
    Policy when ``record_policy``)."""
    cfg = scn.config
    horizon = cfg.horizon if horizon is None else horizon
    if horizon < 10:
        raise DomainError("horizon must be at least 10 slots")
    if decision not in DECISIONS:
        raise DomainError(f"unknown decision source {decision!r}")
    sampling = cfg.sampling if sampling is None else sampling
    V = scn.n_vehicles
    samplers = [aop.SamplingPolicy(sampling, cfg.uniform_bounds, cfg.beta_shape,
                                   rng=substream(scn.seed, "sampling", v, aop.SAMPLING_KINDS.index(sampling))) for v in range(V)]
    timelines = [aop.AgeTimeline(v) for v in range(V)]
    L_prev = np.zeros(V)
    N_prev = np.zeros(V)
    counts = dict.fromkeys(LOCATIONS, 0)
    delays, off_delays, late = [], [], 0
    peaks = {"A": 0.0, "B": 0.0, "C": 0.0}
    n_viol = 0
    gaps = []
    acks = []
    samples = []
    s_ack = cfg.ack_size_bytes * 8.0
    rc_d = scn.topology.rc_distances()
    if objective is None:
        objective = "delay" if decision == "total_delay" else "aop"
    mo = cfg.max_outer if max_outer is None else max_outer

    for slot in range(horizon):
        N_next = np.array([s.draw() for s in samplers])
        try:
            ctx = build_slot(scn, slot, L_prev, N_prev, N_next, objective)
            alloc = "reserve"
            if decision in ("solver", "total_delay"):
                rep = optimizer.solve(ctx.stage, cfg.epsilon, mo, cfg.eta0, certify=False, polish_passes=polish_passes)
                choice = rep.choice
                gaps.append(max(0.0, rep.relative_gap))
            elif decision == "oracle":
                choice, _ = optimizer.enumerate_policies(ctx.stage)
            elif decision == "heuristic":
                choice = _heuristic_choice(scn, ctx, slot)
                alloc = "share"
            elif policy is not None:
                choice = _policy_choice(ctx, policy, L_prev, N_next)
                alloc = "share"  # per-vehicle lookups do not coordinate reservations
            else:
                choice = _fixed_choice(ctx, fixed_kind)
                alloc = "share"
            if strict and alloc == "reserve":
                bad = optimizer.constraint_violations(ctx.stage, choice)
                if bad:
                    raise ConstraintError(f"decision violates {', '.join(bad)}")
            elif strict:
                rc_from = {}
                for v, k in enumerate(choice):
                    m = ctx.choices[v][k]
                    if m["kind"] in ("neighbor", "rc"):
                        rc_from.setdefault(m["r"], [0.0, False])
                        rc_from[m["r"]][0] += ctx.tasks[v].size_bits
                        rc_from[m["r"]][1] |= m["kind"] == "rc"
                for r, (bits, has_rc) in rc_from.items():
                    if has_rc and bits > scn.topology.backhaul_bps[r] * cfg.slot_s * (1 + 1e-9):
                        raise ConstraintError(f"RC admission exceeded at EC {r}")
            ex = _realize(scn, ctx, choice, alloc)
        except AopOffloadError as exc:
            raise type(exc)(f"slot {slot}: {exc}") from exc
        n_viol += _violations(scn, ex)
        for c in "ABC":
            peaks[c] = max(peaks[c], ex.link_peak[c])
        for v in range(V):
            L = float(ex.latency[v])
            ack = 0.0
            if asspo:
                if ack_delay is not None:
                    ack = ack_delay
                else:
                    r = int(ex.serving[v])
                    ack = 2.0 * (rc_d[r] / scn.topology.prop_speed_mps + s_ack / scn.topology.backhaul_bps[r])
                acks.append(ack)
            aop.record_update(timelines[v], L, N=float(N_next[v]), extra_wait=ack)
            counts[LOCATIONS[ex.kind[v]]] += 1
            delays.append(L)
            if ex.kind[v]:
                off_delays.append(L)
            late += L > ctx.tasks[v].deadline_s
            if record_policy:
                est = min(a.latency for a in ctx.stage.actions[v])
                samples.append((v, L_prev[v], N_next[v], est, LOCATIONS[ex.kind[v]]))
            L_prev[v] = L
            N_prev[v] = N_next[v]  # the acknowledgment wait only shifts the timeline
    total = sum(counts.values())
    per_vehicle = []
    aav = np.empty(V)
    for v, tl in enumerate(timelines):
        aav[v] = aop.average_aop(tl)
        _, Ls, _, _ = tl.arrays()
        per_vehicle.append({"vehicle_id": v, "policy": decision, "sampling_kind": sampling,
                            "aav": float(aav[v]), "mean_L": float(Ls.mean())})
    m = Metrics(
        policy=("asspo" if asspo else decision), sampling=sampling, vehicle_count=V, seed=scn.seed, horizon=horizon,
        aav=aav, mean_delay=float(np.mean(delays)),
        mean_offload_delay=float(np.mean(off_delays)) if off_delays else 0.0,
        violation_rate=late / len(delays), histogram={k: c / total for k, c in counts.items()},
        peak_loads=peaks, constraint_violations=n_viol, mean_gap=float(np.mean(gaps)) if gaps else 0.0,
        ack_delay_mean=float(np.mean(acks)) if acks else 0.0, per_vehicle=per_vehicle,
    )
    if not record_policy:
        return m
    arr = np.array([(L, N) for _, L, N, _, _ in samples])
    learnt = optimizer.Policy.from_samples(arr[:, 0], arr[:, 1], cfg.state_bins)
    for v, Lp, N, est, kind in samples:
        learnt.record(v, learnt.state(Lp, N, est), kind)
    return m, learnt


def asspo_baseline(scn: Scenario, horizon: int | None = None, ack_delay: float | None = None, **kw) -> Metrics:
    """Same pipeline, but each next sample waits for the RC acknowledgment round trip."""
    return run_scenario(scn, kw.pop("decision", "solver"), horizon, asspo=True, ack_delay=ack_delay, **kw)


def total_delay_baseline(scn: Scenario, horizon: int | None = None, **kw) -> Metrics:
    """Same solver and constraints with summed latency as the objective."""
    return run_scenario(scn, "total_delay", horizon, **kw)


# ---------------------------------------------------------------------------
# replications and CSV

def _one(args):
    config, seed, decision, kw, dataset = args
    cfg = config.replace(seed=seed)
    topo = prepare_topology(cfg, dataset)
    scn = generate_scenario(cfg, topo)
    if decision == "asspo":
        return asspo_baseline(scn, **kw)
    return run_scenario(scn, decision, **kw)


def replicate(config: ScenarioConfig, decision: str = "solver", replications: int | None = None,
              workers: int = 1, dataset=None, **kw) -> list:
    """Run independent seeded replications; seeds are ``config.seed + r``."""
    n = config.replications if replications is None else replications
    jobs = [(config, config.seed + r, decision, kw, dataset) for r in range(n)]
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


METRIC_COLUMNS = list(Metrics(policy="", sampling="", vehicle_count=0, seed=0, horizon=0, aav=np.zeros(1),
                              mean_delay=0, mean_offload_delay=0, violation_rate=0,
                              histogram=dict.fromkeys(LOCATIONS, 0.0), peak_loads=dict.fromkeys("ABC", 0.0),
                              constraint_violations=0).row().keys())


def metrics_csv(metrics: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS, lineterminator="\n")
    w.writeheader()
    for i, m in enumerate(metrics):
        w.writerow(m.row(i))
    return buf.getvalue()
