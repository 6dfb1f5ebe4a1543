"""Hot numeric loops, compiled with numba when available.

Every kernel exists twice: an explicit-loop version that numba compiles with
``@njit`` and a pure-numpy version.  Setting ``AOPOFFLOAD_NO_NUMBA=1`` in the
environment (before import) selects the numpy path; so does a missing numba.
``BACKEND`` reports which one is live.  Both paths are exercised by the tests
and compared in ``benchmarks/bench_kernels.py``.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("AOPOFFLOAD_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by AOPOFFLOAD_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# affinity propagation sweep

def ap_sweep_numpy(S, R, A, damping):
    n = S.shape[0]
    rows = np.arange(n)
    AS = A + S
    idx = np.argmax(AS, axis=1)
    first = AS[rows, idx]
    AS[rows, idx] = NEG_INF
    second = np.max(AS, axis=1)
    Rn = S - first[:, None]
    Rn[rows, idx] = S[rows, idx] - second
    Rn = damping * R + (1.0 - damping) * Rn

    Rp = np.maximum(Rn, 0.0)
    Rp[rows, rows] = Rn[rows, rows]
    An = Rp.sum(axis=0)[None, :] - Rp
    diag = An[rows, rows].copy()
    An = np.minimum(An, 0.0)
    An[rows, rows] = diag
    An = damping * A + (1.0 - damping) * An
    return Rn, An


def _ap_sweep_loops(S, R, A, damping):
    n = S.shape[0]
    Rn = np.empty_like(S)
    for i in range(n):
        first = NEG_INF
        second = NEG_INF
        arg = 0
        for k in range(n):
            v = A[i, k] + S[i, k]
            if v > first:
                second = first
                first = v
                arg = k
            elif v > second:
                second = v
        for k in range(n):
            if k == arg:
                val = S[i, k] - second
            else:
                val = S[i, k] - first
            Rn[i, k] = damping * R[i, k] + (1.0 - damping) * val
    An = np.empty_like(S)
    for k in range(n):
        pos = 0.0
        for i in range(n):
            if i != k and Rn[i, k] > 0.0:
                pos += Rn[i, k]
        for i in range(n):
            if i == k:
                val = pos
            else:
                own = Rn[i, k] if Rn[i, k] > 0.0 else 0.0
                val = Rn[k, k] + pos - own
                if val > 0.0:
                    val = 0.0
            An[i, k] = damping * A[i, k] + (1.0 - damping) * val
    return Rn, An


# ---------------------------------------------------------------------------
# age-of-processing areas

def q_areas_numpy(L, N):
    L = np.asarray(L, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    q1 = np.zeros_like(L)
    q1[1:] = (L[:-1] + N[:-1]) * L[1:]
    q2 = 0.5 * (L + N) ** 2
    return q1, q2


def _q_areas_loops(L, N):
    n = L.shape[0]
    q1 = np.zeros(n)
    q2 = np.empty(n)
    for i in range(n):
        if i > 0:
            q1[i] = (L[i - 1] + N[i - 1]) * L[i]
        s = L[i] + N[i]
        q2[i] = 0.5 * s * s
    return q1, q2


def sawtooth_integral_numpy(K, M, t0, t1):
    K = np.asarray(K, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    inner = M[(M > t0) & (M < t1)]
    edges = np.concatenate(([t0], inner, [t1]))
    a = edges[:-1]
    b = edges[1:]
    last = np.searchsorted(M, a, side="right") - 1
    u = K[last]
    return float(np.sum((b - a) * 0.5 * ((a - u) + (b - u))))


def _sawtooth_integral_loops(K, M, t0, t1):
    n = M.shape[0]
    j = 0
    while j + 1 < n and M[j + 1] <= t0:
        j += 1
    total = 0.0
    a = t0
    while a < t1:
        b = t1
        if j + 1 < n and M[j + 1] < t1:
            b = M[j + 1]
        u = K[j]
        total += (b - a) * 0.5 * ((a - u) + (b - u))
        a = b
        j += 1
    return total


# ---------------------------------------------------------------------------
# dual decomposition: relaxed per-vehicle minimisation

def relaxed_argmin_numpy(cost, a, p, rat, node, lam, mu):
    lam_x = np.concatenate((lam, [0.0]))
    mu_x = np.concatenate((mu, [0.0]))
    red = cost + lam_x[rat] * a + mu_x[node] * p
    choice = np.argmin(red, axis=1)
    rows = np.arange(cost.shape[0])
    best = red[rows, choice]
    rc = rat[rows, choice]
    nc = node[rows, choice]
    rat_load = np.bincount(rc[rc >= 0], weights=a[rows, choice][rc >= 0], minlength=lam.shape[0])
    node_load = np.bincount(nc[nc >= 0], weights=p[rows, choice][nc >= 0], minlength=mu.shape[0])
    return choice, best, red, rat_load.astype(np.float64), node_load.astype(np.float64)


def _relaxed_argmin_loops(cost, a, p, rat, node, lam, mu):
    V, K = cost.shape
    red = np.empty((V, K))
    choice = np.zeros(V, dtype=np.int64)
    best = np.empty(V)
    rat_load = np.zeros(lam.shape[0])
    node_load = np.zeros(mu.shape[0])
    for v in range(V):
        bk = 0
        bv = np.inf
        for k in range(K):
            c = cost[v, k]
            s = rat[v, k]
            e = node[v, k]
            if s >= 0:
                c += lam[s] * a[v, k]
            if e >= 0:
                c += mu[e] * p[v, k]
            red[v, k] = c
            if c < bv:
                bv = c
                bk = k
        choice[v] = bk
        best[v] = bv
        if rat[v, bk] >= 0:
            rat_load[rat[v, bk]] += a[v, bk]
        if node[v, bk] >= 0:
            node_load[node[v, bk]] += p[v, bk]
    return choice, best, red, rat_load, node_load


# ---------------------------------------------------------------------------
# greedy rounding with repair and one-move improvement

def _fits(v, k, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count, fwd_cap, tol):
    s = rat[v, k]
    if s >= 0 and rat_used[s] + a[v, k] > 1.0 + tol:
        return False
    e = node[v, k]
    if e >= 0 and node_used[e] + p[v, k] > 1.0 + tol:
        return False
    kd = kind[v, k]
    if kd == 2 or kd == 3:
        r = serving[v, k]
        if kd == 3 or rc_count[r] > 0:
            if fwd_used[r] + bits[v] > fwd_cap[r] * (1.0 + tol):
                return False
    return True


def _take(v, k, sign, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count):
    s = rat[v, k]
    if s >= 0:
        rat_used[s] += sign * a[v, k]
    e = node[v, k]
    if e >= 0:
        node_used[e] += sign * p[v, k]
    kd = kind[v, k]
    if kd == 2 or kd == 3:
        r = serving[v, k]
        fwd_used[r] += sign * bits[v]
        if kd == 3:
            rc_count[r] += int(sign)


def _greedy_round_loops(red, cost, a, p, rat, node, kind, serving, bits, n_rat, n_node, fwd_cap, max_passes):
    V, K = red.shape
    tol = 1e-9
    rat_used = np.zeros(n_rat)
    node_used = np.zeros(n_node)
    fwd_used = np.zeros(fwd_cap.shape[0])
    rc_count = np.zeros(fwd_cap.shape[0], dtype=np.int64)

    regret = np.empty(V)
    for v in range(V):
        b1 = np.inf
        b2 = np.inf
        for k in range(K):
            x = red[v, k]
            if x < b1:
                b2 = b1
                b1 = x
            elif x < b2:
                b2 = x
        regret[v] = b2 - b1 if np.isfinite(b2) else np.inf
    # stable descending order by regret
    order = np.argsort(-regret, kind="mergesort")

    choice = np.full(V, -1, dtype=np.int64)
    for idx in range(V):
        v = order[idx]
        ks = np.argsort(red[v], kind="mergesort")
        for j in range(K):
            k = ks[j]
            if not np.isfinite(red[v, k]):
                break
            if _fits(v, k, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count, fwd_cap, tol):
                choice[v] = k
                _take(v, k, 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                break

    for _ in range(max_passes):
        changed = False
        for idx in range(V):
            v = order[idx]
            cur = choice[v]
            if cur < 0:
                continue
            _take(v, cur, -1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
            best_k = cur
            best_c = cost[v, cur]
            for k in range(K):
                c = cost[v, k]
                if c < best_c - 1e-12 * abs(best_c) and np.isfinite(c):
                    if _fits(v, k, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count, fwd_cap, tol):
                        best_k = k
                        best_c = c
            choice[v] = best_k
            _take(v, best_k, 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
            if best_k != cur:
                changed = True
        if not changed:
            break
    return choice


def _pair_descent_loops(choice, cost, a, p, rat, node, kind, serving, bits, n_rat, n_node, fwd_cap, max_passes):
    """Two-vehicle exchange: move v to a cheaper action and relocate one blocker u."""
    V, K = cost.shape
    tol = 1e-9
    rat_used = np.zeros(n_rat)
    node_used = np.zeros(n_node)
    fwd_used = np.zeros(fwd_cap.shape[0])
    rc_count = np.zeros(fwd_cap.shape[0], dtype=np.int64)
    for v in range(V):
        _take(v, choice[v], 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
    for _ in range(max_passes):
        improved = False
        for v in range(V):
            cv = choice[v]
            for k in range(K):
                gain_v = cost[v, cv] - cost[v, k]
                if not (np.isfinite(cost[v, k]) and gain_v > 1e-12 * abs(cost[v, cv])):
                    continue
                best_u = -1
                best_k2 = -1
                best_total = 0.0
                _take(v, cv, -1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                for u in range(V):
                    if u == v:
                        continue
                    cu = choice[u]
                    _take(u, cu, -1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                    if _fits(v, k, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count, fwd_cap, tol):
                        _take(v, k, 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                        for k2 in range(K):
                            if not np.isfinite(cost[u, k2]):
                                continue
                            total = gain_v + cost[u, cu] - cost[u, k2]
                            if total > best_total + 1e-12 * abs(cost[v, cv]):
                                if _fits(u, k2, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count, fwd_cap, tol):
                                    best_total = total
                                    best_u = u
                                    best_k2 = k2
                        _take(v, k, -1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                    _take(u, cu, 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                if best_u >= 0:
                    _take(best_u, choice[best_u], -1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                    _take(v, k, 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                    _take(best_u, best_k2, 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
                    choice[v] = k
                    choice[best_u] = best_k2
                    cv = k
                    improved = True
                else:
                    _take(v, cv, 1.0, a, p, rat, node, kind, serving, bits, rat_used, node_used, fwd_used, rc_count)
        if not improved:
            break
    return choice


if HAVE_NUMBA:
    _ap_sweep_jit = njit(cache=True)(_ap_sweep_loops)
    _q_areas_jit = njit(cache=True)(_q_areas_loops)
    _sawtooth_jit = njit(cache=True)(_sawtooth_integral_loops)
    _relaxed_jit = njit(cache=True)(_relaxed_argmin_loops)
    _fits = njit(cache=True)(_fits)
    _take = njit(cache=True)(_take)
    _greedy_jit = njit(cache=True)(_greedy_round_loops)
    _pair_jit = njit(cache=True)(_pair_descent_loops)
else:  # pragma: no cover
    _greedy_jit = _greedy_round_loops
    _pair_jit = _pair_descent_loops


def ap_sweep(S, R, A, damping):
    """One damped responsibility/availability sweep; returns new (R, A)."""
    if HAVE_NUMBA:
        return _ap_sweep_jit(S, R, A, float(damping))
    return ap_sweep_numpy(S, R.copy(), A.copy(), float(damping))


def q_areas(L, N):
    """Per-record parallelogram and triangle areas of the age sawtooth."""
    L = np.ascontiguousarray(L, dtype=np.float64)
    N = np.ascontiguousarray(N, dtype=np.float64)
    if HAVE_NUMBA:
        return _q_areas_jit(L, N)
    return q_areas_numpy(L, N)


def sawtooth_integral(K, M, t0, t1):
    """Exact integral of ``t - max{K_i : M_i <= t}`` over ``[t0, t1]``."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    M = np.ascontiguousarray(M, dtype=np.float64)
    if HAVE_NUMBA:
        return float(_sawtooth_jit(K, M, float(t0), float(t1)))
    return sawtooth_integral_numpy(K, M, float(t0), float(t1))


def relaxed_argmin(cost, a, p, rat, node, lam, mu):
    """Per-vehicle minimiser of the multiplier-adjusted cost.

    Padding entries carry ``cost = inf``; ``rat``/``node`` use -1 for "none".
    Returns ``(choice, best, reduced, rat_load, node_load)``.
    """
    if HAVE_NUMBA:
        return _relaxed_jit(cost, a, p, rat, node, lam, mu)
    return relaxed_argmin_numpy(cost, a, p, rat, node, lam, mu)


def greedy_round(red, cost, a, p, rat, node, kind, serving, bits, n_rat, n_node, fwd_cap, max_passes=5,
                 pair_passes=0):
    """Feasible integer choice: regret-ordered greedy fill, one-move descent,
    then ``pair_passes`` rounds of two-vehicle exchanges.  Unplaced vehicles
    come back as -1."""
    fwd_cap = np.ascontiguousarray(fwd_cap, dtype=np.float64)
    choice = _greedy_jit(red, cost, a, p, rat, node, kind, serving, bits, int(n_rat), int(n_node),
                         fwd_cap, int(max_passes))
    if pair_passes > 0 and np.all(choice >= 0):
        choice = _pair_jit(choice, cost, a, p, rat, node, kind, serving, bits, int(n_rat), int(n_node),
                           fwd_cap, int(pair_passes))
    return choice


def pair_descent(choice, cost, a, p, rat, node, kind, serving, bits, n_rat, n_node, fwd_cap, max_passes=2):
    """Improve a feasible choice by two-vehicle exchanges (in place on a copy)."""
    return _pair_jit(np.ascontiguousarray(choice, dtype=np.int64).copy(), cost, a, p, rat, node, kind, serving,
                     bits, int(n_rat), int(n_node), np.ascontiguousarray(fwd_cap, dtype=np.float64),
                     int(max_passes))
