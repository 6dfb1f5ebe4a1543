"""Energy and delay for the four execution sites: local, serving EC,
neighbor EC inside the collaboration space, and the regional cloud."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissionError, DomainError

SCENARIOS = ("b", "c", "d")  # serving EC, neighbor EC, regional cloud


@dataclass(frozen=True)
class LocalOutcome:
    energy_j: float
    exec_time_s: float
    feasible: int          # alpha: 1 if the vehicle can finish on its own
    total_local_s: float   # local branch time, including the wait when infeasible


@dataclass(frozen=True)
class RemoteOutcome:
    scenario: str
    tx_delay_s: float
    hop_delay_s: float
    prop_delay_s: float
    exec_time_s: float

    @property
    def total_s(self) -> float:
        return self.tx_delay_s + self.hop_delay_s + self.prop_delay_s + self.exec_time_s


def local_energy(size_bits, workload_cpb, cpu_hz, nu=1e-26):
    return size_bits * nu * workload_cpb * cpu_hz ** 2


def local_time(size_bits, workload_cpb, cpu_hz):
    return size_bits * workload_cpb / cpu_hz


def local_compute(vehicle, task, offloaded: bool = False) -> LocalOutcome:
    """Local execution.  alpha = 0 when the demand rate s_d z / deadline exceeds
    the vehicle CPU (equivalently the run misses the deadline) or the energy
    exceeds the budget."""
    e = local_energy(task.size_bits, task.workload_cpb, vehicle.cpu_hz, vehicle.nu)
    t = local_time(task.size_bits, task.workload_cpb, vehicle.cpu_hz)
    demand_rate = task.size_bits * task.workload_cpb / task.deadline_s
    feasible = int(demand_rate <= vehicle.cpu_hz and t <= task.deadline_s and e <= vehicle.energy_budget_j)
    if offloaded:
        total = 0.0
    else:
        total = t if feasible else t + vehicle.local_wait_s
    return LocalOutcome(e, t, feasible, total)


def offload_tx_delay(size_bits: float, rate_bps: float, fronthaul_bps: float = np.inf) -> float:
    """Wireless uplink plus the fronthaul/Y2 hop to the serving EC."""
    if not rate_bps > 0:
        raise DomainError("offload needs a positive uplink rate")
    if not fronthaul_bps > 0:
        raise DomainError("fronthaul capacity must be positive")
    return size_bits / rate_bps + size_bits / fronthaul_bps


def choice_tx_delay(size_bits: float, choice, fronthaul_bps: float) -> float:
    if not choice.offload:
        raise DomainError("transmission delay is defined only for offloaded tasks")
    return offload_tx_delay(size_bits, choice.rate, fronthaul_bps)


def ec_allocation(cpu_hz: float, workloads) -> np.ndarray:
    """Workload-proportional split of an EC's cycles among its admitted tasks."""
    z = np.asarray(workloads, dtype=np.float64)
    if z.size == 0:
        raise DomainError("allocation needs at least one task")
    if np.any(z <= 0):
        raise DomainError("workloads must be positive")
    return cpu_hz * z / z.sum()


def needs_redirect(task, cpu_hz: float) -> bool:
    """Demand-rate test: the task cannot finish by its deadline on ``cpu_hz``."""
    return task.size_bits * task.workload_cpb / task.deadline_s > cpu_hz


def remote_exec_time(scenario: str, task, tx_delay_s: float, cpu_hz: float, *, hop_bps: float | None = None,
                     hop_bits: float | None = None, distance_m: float = 0.0, prop_speed_mps: float = 2e8,
                     topology=None, r: int | None = None, j: int | None = None,
                     forwarded_bits: float | None = None, slot_s: float = 1.0) -> RemoteOutcome:
    """Delay chain for scenario b (serving EC), c (neighbor EC) or d (regional cloud).

    ``hop_bits`` is the aggregated volume on the hop link (defaults to the
    task's own size); the hop delay is ``hop_bits / hop_bps``.
    """
    if scenario not in SCENARIOS:
        raise DomainError(f"unknown scenario {scenario!r}")
    if not cpu_hz > 0:
        raise DomainError("allocated cycles must be positive")
    exec_s = task.size_bits * task.workload_cpb / cpu_hz
    if scenario == "b":
        return RemoteOutcome("b", tx_delay_s, 0.0, 0.0, exec_s)
    if topology is not None and r is not None:
        if scenario == "c":
            if j is None or not topology.same_cs(r, j):
                raise DomainError(f"neighbor EC {j} is outside the collaboration space of EC {r}")
            if topology.ec_distance(r, j) >= topology.rc_distance(r):
                raise DomainError(f"neighbor EC {j} is not closer than the regional cloud")
            hop_bps = float(topology.inter_ec_bps[r, j]) if hop_bps is None else hop_bps
            distance_m = topology.ec_distance(r, j)
        else:
            hop_bps = float(topology.backhaul_bps[r]) if hop_bps is None else hop_bps
            distance_m = topology.rc_distance(r)
            if forwarded_bits is not None and forwarded_bits > hop_bps * slot_s * (1 + 1e-9):
                raise AdmissionError(f"EC {r}: forwarded volume exceeds the backhaul capacity")
        prop_speed_mps = topology.prop_speed_mps
    elif scenario == "d" and forwarded_bits is not None and hop_bps is not None:
        if forwarded_bits > hop_bps * slot_s * (1 + 1e-9):
            raise AdmissionError("forwarded volume exceeds the backhaul capacity")
    if hop_bps is None:
        hop_s = 0.0
    else:
        if not hop_bps > 0:
            raise DomainError("hop capacity must be positive")
        hop_s = (task.size_bits if hop_bits is None else hop_bits) / hop_bps
    return RemoteOutcome(scenario, tx_delay_s, hop_s, distance_m / prop_speed_mps, exec_s)


def total_offload_delay(y_sr: int, y_rj: int, y_rc: int, outcomes: dict, x: int = 1) -> float:
    """Selector over the scenario totals; ``outcomes`` maps 'b'/'c'/'d' to RemoteOutcome or seconds."""
    ys = (y_sr, y_rj, y_rc)
    if x == 0:
        if any(ys):
            raise DomainError("execution site set on a local task")
        return 0.0
    if sum(ys) != 1 or any(y not in (0, 1) for y in ys):
        raise DomainError("exactly one execution site must be active for an offloaded task")
    key = "bcd"[ys.index(1)]
    out = outcomes[key]
    return float(out.total_s if isinstance(out, RemoteOutcome) else out)
