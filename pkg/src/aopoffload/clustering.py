"""Collaboration-space formation.

Affinity propagation over negative squared distances (APACS), a k-means +
elbow baseline, and an exhaustive exemplar search used as an exact oracle on
small inputs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError

ORACLE_MAX_POINTS = 15


@dataclass(frozen=True)
class CollaborationSpace:
    centroid: int
    members: tuple

    def __post_init__(self):
        if self.centroid not in self.members:
            raise DomainError("centroid must be a member of its collaboration space")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class MessageState:
    S: np.ndarray
    R: np.ndarray
    A: np.ndarray
    damping: float = 0.5

    @classmethod
    def initial(cls, S, damping=0.5) -> "MessageState":
        S = np.ascontiguousarray(S, dtype=np.float64)
        return cls(S, np.zeros_like(S), np.zeros_like(S), float(damping))

    @property
    def preference(self) -> np.ndarray:
        return np.diag(self.S).copy()


def _as_points(positions) -> np.ndarray:
    pts = np.asarray(positions, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DomainError("positions must be a non-empty list of points")
    if not np.all(np.isfinite(pts)):
        raise DomainError("non-finite coordinates")
    return pts


def median_preference(S_offdiag: np.ndarray) -> float:
    n = S_offdiag.shape[0]
    if n < 2:
        return 0.0
    mask = ~np.eye(n, dtype=bool)
    return float(np.median(S_offdiag[mask]))


def similarity_matrix(positions, preference="median") -> np.ndarray:
    """Negative squared distances with the preference on the diagonal."""
    pts = _as_points(positions)
    diff = pts[:, None, :] - pts[None, :, :]
    S = -np.einsum("ijk,ijk->ij", diff, diff)
    if isinstance(preference, str):
        if preference != "median":
            raise DomainError(f"unknown preference rule {preference!r}")
        pref = median_preference(S)
    else:
        pref = np.asarray(preference, dtype=np.float64)
        if pref.ndim and pref.shape != (pts.shape[0],):
            raise DomainError("per-point preference must have one value per point")
    np.fill_diagonal(S, pref)
    return S


def ap_iterate(state: MessageState) -> MessageState:
    """One damped sweep: responsibilities first, then availabilities."""
    R, A = _kernels.ap_sweep(state.S, state.R, state.A, state.damping)
    return MessageState(state.S, R, A, state.damping)


def ap_criterion(state: MessageState) -> np.ndarray:
    """Exemplar index for every point, from argmax of responsibility + availability."""
    C = state.R + state.A
    n = C.shape[0]
    raw = np.argmax(C, axis=1)  # first maximum, i.e. lowest index on ties
    exemplars = np.flatnonzero(raw == np.arange(n))
    if exemplars.size == 0:
        exemplars = np.array([int(np.argmax(np.diag(C)))])
    assign = raw.copy()
    assign[exemplars] = exemplars
    is_ex = np.zeros(n, dtype=bool)
    is_ex[exemplars] = True
    for r in np.flatnonzero(~is_ex[assign]):
        assign[r] = exemplars[int(np.argmax(state.S[r, exemplars]))]
    return assign


def spaces_from_assignment(assign) -> list[CollaborationSpace]:
    assign = np.asarray(assign)
    out = []
    for e in np.unique(assign):
        members = tuple(int(i) for i in np.flatnonzero(assign == e))
        out.append(CollaborationSpace(int(e), members))
    return out


def net_similarity(S: np.ndarray, assign) -> float:
    """Sum of member-to-exemplar similarities plus exemplar preferences."""
    assign = np.asarray(assign)
    n = S.shape[0]
    return float(S[np.arange(n), assign].sum())


def _assign_to(S, exemplars):
    """Nearest-exemplar assignment (lowest index on ties); exemplars map to themselves."""
    ex = np.asarray(sorted(exemplars))
    assign = ex[np.argmax(S[:, ex], axis=1)]
    assign[ex] = ex
    return assign


def refine_exemplars(S: np.ndarray, assign, max_rounds: int = 100) -> np.ndarray:
    """Best-improvement local search over the exemplar set (add, drop, swap one).

    Message passing can settle on a set that a single move improves; this
    polishes the converged set on the same net-similarity objective.
    """
    n = S.shape[0]
    D = S.copy()
    np.fill_diagonal(D, -np.inf)
    pref = np.diag(S)

    def score(ex):
        m = np.zeros(n, dtype=bool)
        m[list(ex)] = True
        best = D[:, m].max(axis=1)
        return float(best[~m].sum() + pref[m].sum())

    cur = set(int(e) for e in np.unique(assign))
    cur_val = score(cur)
    for _ in range(max_rounds):
        moves = [cur | {j} for j in range(n) if j not in cur]
        if len(cur) > 1:
            moves += [cur - {e} for e in cur]
            moves += [(cur - {e}) | {j} for e in cur for j in range(n) if j not in cur]
        if not moves:
            break
        vals = [score(m) for m in moves]
        k = int(np.argmax(vals))
        if vals[k] <= cur_val + 1e-12 * max(abs(cur_val), 1.0):
            break
        cur, cur_val = moves[k], vals[k]
    return _assign_to(S, cur)


@dataclass
class ApacsResult:
    spaces: list
    assignment: np.ndarray
    iterations: int
    converged: bool
    state: MessageState = field(repr=False)

    @property
    def n_spaces(self) -> int:
        return len(self.spaces)

    @property
    def mean_size(self) -> float:
        return float(np.mean([s.size for s in self.spaces]))

    def objective(self) -> float:
        return net_similarity(self.state.S, self.assignment)


def run_apacs(positions, max_iters: int = 300, damping: float = 0.5, preference="median",
              window: int = 15, ids=None, tie_break: float = 1e-9, refine: bool = False) -> ApacsResult:
    """Affinity propagation until the partition is stable for ``window`` sweeps.

    ``refine`` follows convergence with :func:`refine_exemplars`.

    Exact ties (symmetric layouts) are broken toward the smallest id by adding
    ``tie_break * max|S| * (n - 1 - rank(id))`` to each preference before
    iterating; the reported objective uses the unperturbed similarities.
    """
    if max_iters < 1:
        raise DomainError("max_iters must be at least 1")
    S = similarity_matrix(positions, preference)
    n = S.shape[0]
    rank = np.arange(n) if ids is None else np.argsort(np.argsort(np.asarray(ids), kind="stable"), kind="stable")
    S_run = S.copy()
    S_run[np.arange(n), np.arange(n)] += tie_break * max(np.abs(S).max(), 1.0) * (n - 1 - rank)
    state = MessageState.initial(S_run, damping)
    prev = None
    stable = 0
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        state = ap_iterate(state)
        assign = ap_criterion(state)
        if prev is not None and np.array_equal(assign, prev):
            stable += 1
        else:
            stable = 0
        prev = assign
        if stable >= window:
            converged = True
            break
    state = MessageState(S, state.R, state.A, state.damping)
    if refine:
        prev = refine_exemplars(S_run, prev)
    return ApacsResult(spaces_from_assignment(prev), prev, it, converged, state)


def kmeans_elbow(positions, k_max: int, seed: int = 0):
    """k-means for k = 1..k_max; the elbow is the largest second difference of WCSS.

    Returns ``(k_star, labels, wcss)``.
    """
    from sklearn.cluster import KMeans

    pts = _as_points(positions)
    if k_max < 1:
        raise DomainError("k_max must be at least 1")
    if k_max > pts.shape[0]:
        raise DomainError(f"k_max {k_max} exceeds the number of points {pts.shape[0]}")
    wcss = np.empty(k_max)
    labels = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(1, k_max + 1):
            km = KMeans(n_clusters=k, n_init=10, random_state=seed).fit(pts)
            wcss[k - 1] = km.inertia_
            labels[k] = km.labels_.copy()
    scale = max(wcss[0], 1e-300)
    if wcss[0] <= 1e-12 * max(1.0, float(np.sum(pts ** 2))):
        k_star = 1
    elif k_max < 3:
        k_star = k_max if k_max == 2 and wcss[1] < wcss[0] * (1 - 1e-12) else 1
    else:
        d2 = (wcss[:-2] - 2 * wcss[1:-1] + wcss[2:]) / scale
        k_star = int(np.argmax(d2)) + 2
    return k_star, labels[k_star], wcss


def exemplar_oracle(positions, preference="median"):
    """Exhaustive search over non-empty exemplar subsets (n <= 15).

    Returns ``(exemplars, assignment, objective)``; objective ties go to the
    lexicographically smallest exemplar tuple, nearest-exemplar ties to the
    lowest index.
    """
    pts = _as_points(positions)
    n = pts.shape[0]
    if n > ORACLE_MAX_POINTS:
        raise DomainError(f"exemplar oracle refuses n = {n} > {ORACLE_MAX_POINTS}")
    S = similarity_matrix(pts, preference)
    pref = np.diag(S).copy()
    D = S.copy()
    np.fill_diagonal(D, 0.0)  # distance part only; a point is never its own non-exemplar

    masks = np.arange(1, 1 << n, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)      # (m, n)
    # best similarity to any exemplar, per subset and point
    cand = np.where(member[:, None, :], D[None, :, :], -np.inf)      # (m, n, n)
    best = cand.max(axis=2)
    best = np.where(member, 0.0, best)
    obj = best.sum(axis=1) + (member * pref[None, :]).sum(axis=1)
    top = obj.max()
    tied = np.flatnonzero(obj >= top - 1e-9 * max(abs(top), 1.0))
    m = min(tied, key=lambda t: tuple(np.flatnonzero(member[t])))
    ex = np.flatnonzero(member[m])
    assign = ex[np.argmax(D[:, ex], axis=1)]
    assign[ex] = ex
    return tuple(int(e) for e in ex), assign, float(obj[m])
