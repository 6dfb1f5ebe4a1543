"""Age of Processing bookkeeping.

Update i is sampled at K_i, takes L_i to process, lands at M_i = K_i + L_i,
and the next sample waits N_i: K_{i+1} = M_i + N_i.  The age at time t is
t - max{K_i : M_i <= t}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError

SAMPLING_KINDS = ("zero_wait", "random", "uniform", "beta")


@dataclass(frozen=True)
class UpdateRecord:
    index: int
    K: float
    L: float
    M: float
    N: float


@dataclass
class SamplingPolicy:
    """Draws the idle time N_i in [0, 1] s."""
    kind: str = "zero_wait"
    uniform_bounds: tuple = (0.0, 1.0)
    beta_shape: tuple = (2.0, 5.0)
    seed: int | None = 0
    rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in SAMPLING_KINDS:
            raise DomainError(f"unknown sampling kind {self.kind!r}")
        lo, hi = self.uniform_bounds
        if not 0.0 <= lo <= hi <= 1.0:
            raise DomainError("uniform bounds must satisfy 0 <= lo <= hi <= 1")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    def draw(self) -> float:
        if self.kind == "zero_wait":
            return 0.0
        if self.kind == "random":
            return float(self.rng.random())
        if self.kind == "uniform":
            return float(self.rng.uniform(*self.uniform_bounds))
        return float(self.rng.beta(*self.beta_shape))

    def draws(self, n: int) -> np.ndarray:
        if self.kind == "zero_wait":
            return np.zeros(n)
        if self.kind == "random":
            return self.rng.random(n)
        if self.kind == "uniform":
            return self.rng.uniform(*self.uniform_bounds, size=n)
        return self.rng.beta(*self.beta_shape, size=n)

    @property
    def mean(self) -> float:
        if self.kind == "zero_wait":
            return 0.0
        if self.kind == "random":
            return 0.5
        if self.kind == "uniform":
            return 0.5 * sum(self.uniform_bounds)
        a, b = self.beta_shape
        return a / (a + b)


@dataclass
class AgeTimeline:
    vehicle_id: int = 0
    records: list = field(default_factory=list)
    next_sample_at: float = 0.0

    def __len__(self):
        return len(self.records)

    def arrays(self):
        """(K, L, M, N) as float arrays."""
        if not self.records:
            z = np.zeros(0)
            return z, z, z, z
        arr = np.array([(r.K, r.L, r.M, r.N) for r in self.records], dtype=np.float64)
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]

    @property
    def last(self) -> UpdateRecord | None:
        return self.records[-1] if self.records else None


def record_update(timeline: AgeTimeline, L: float, policy: SamplingPolicy | None = None,
                  N: float | None = None, extra_wait: float = 0.0) -> AgeTimeline:
    """Append update i with duration L; the idle time comes from ``N`` or the policy.

    ``extra_wait`` is added to the idle time (used for acknowledgment waits).
    """
    if not L > 0:
        raise DomainError(f"update duration must be positive, got {L}")
    if N is None:
        N = policy.draw() if policy is not None else 0.0
    if N < 0 or extra_wait < 0:
        raise DomainError("idle time must be non-negative")
    idle = N + extra_wait
    K = timeline.next_sample_at
    M = K + L
    timeline.records.append(UpdateRecord(len(timeline.records) + 1, K, float(L), M, float(idle)))
    timeline.next_sample_at = M + idle
    return timeline


def timeline_from(L, N, K0: float = 0.0, vehicle_id: int = 0) -> AgeTimeline:
    L = np.asarray(L, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    if np.any(L <= 0) or np.any(N < 0):
        raise DomainError("durations must be positive and idle times non-negative")
    K = K0 + np.concatenate(([0.0], np.cumsum(L + N)[:-1]))
    M = K + L
    recs = [UpdateRecord(i + 1, K[i], L[i], M[i], N[i]) for i in range(len(L))]
    return AgeTimeline(vehicle_id, recs, float(M[-1] + N[-1]) if len(L) else K0)


def instantaneous_age(timeline: AgeTimeline, t: float) -> float:
    K, _, M, _ = timeline.arrays()
    if len(M) == 0 or t < M[0]:
        raise DomainError("age is undefined before the first delivery")
    i = int(np.searchsorted(M, t, side="right")) - 1
    return float(t - K[i])


def age_areas(L_prev, N_prev, L_i, N_i):
    """Parallelogram (L_prev + N_prev) L_i and triangle (L_i + N_i)^2 / 2."""
    return (L_prev + N_prev) * L_i, 0.5 * (L_i + N_i) ** 2


def q_terms(L, N):
    """Per-update (Q1, Q2); the first update has no predecessor so Q1[0] = 0."""
    return _kernels.q_areas(L, N)


def average_aop(timeline_or_L, N=None) -> float:
    """Ratio estimator sum(Q1 + Q2) / sum(L + N) over updates with a predecessor."""
    if N is None:
        _, L, _, N = timeline_or_L.arrays()
    else:
        L = np.asarray(timeline_or_L, dtype=np.float64)
        N = np.asarray(N, dtype=np.float64)
    if len(L) < 2:
        raise DomainError("average AoP needs at least two updates")
    q1, q2 = q_terms(L, N)
    return float((q1[1:] + q2[1:]).sum() / (L[1:] + N[1:]).sum())


def mean_q(L, N) -> float:
    """Mean Q-area per update, the unnormalised surrogate of the average AoP."""
    L = np.asarray(L, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    if len(L) < 2:
        raise DomainError("surrogate needs at least two updates")
    q1, q2 = q_terms(L, N)
    return float((q1[1:] + q2[1:]).mean())


def integrate_age(timeline: AgeTimeline, t0: float, t1: float) -> float:
    """Exact integral of the age sawtooth over [t0, t1]."""
    K, _, M, _ = timeline.arrays()
    if len(M) == 0 or t0 < M[0] or t1 < t0:
        raise DomainError("integration window must start at or after the first delivery")
    return _kernels.sawtooth_integral(K, M, t0, t1)


def boundary_terms(L, N):
    """Head and tail corrections linking the Q-sum to the integral over [M_1, M_n]."""
    head = L[0] * N[0] + 0.5 * N[0] ** 2
    tail = L[-1] * N[-1] + 0.5 * N[-1] ** 2
    return head, tail


def policy_average_aop(latency_fn, sampling: SamplingPolicy | str = "zero_wait", horizon: int = 200,
                       replications: int = 10, seed: int = 0) -> float:
    """Ratio-of-expectations estimate E[sum Q] / E[sum(L + N)] under a policy.

    ``latency_fn(i, rng)`` returns the update duration chosen for cycle i.
    """
    if horizon < 10:
        raise DomainError("horizon must be at least 10 cycles")
    num = 0.0
    den = 0.0
    for rep in range(replications):
        ss = np.random.SeedSequence([int(seed), rep])
        s_rng, l_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        pol = sampling if isinstance(sampling, SamplingPolicy) else SamplingPolicy(sampling, rng=s_rng)
        L = np.array([latency_fn(i, l_rng) for i in range(horizon)], dtype=np.float64)
        N = pol.draws(horizon)
        q1, q2 = q_terms(L, N)
        num += (q1[1:] + q2[1:]).sum()
        den += (L[1:] + N[1:]).sum()
    return float(num / den)
