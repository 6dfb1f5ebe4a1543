"""Per-slot offloading decisions by Lagrangian dual decomposition.

One slot is a generalised assignment problem: every vehicle picks one action
(local, serving EC over some RAT, a neighbor EC in its collaboration space, or
the regional cloud).  Actions consume a fraction of a RAT's bandwidth and a
fraction of a compute node's cycles; both capacities are normalised to 1.
RC offloads are additionally admitted only while the serving EC's forwarded
volume fits its backhaul within the slot.

The RAT and node constraints are priced with multipliers (lambda per RAT, mu
per node).  Each outer iteration solves the separable relaxed problem exactly,
rounds it to a feasible integer decision, and moves the multipliers by
projected subgradient ascent with step eta0 / sqrt(k).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, InfeasibleError

KIND_CODES = {"local": 0, "ec": 1, "neighbor": 2, "rc": 3}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
ENUM_MAX_VEHICLES = 5
ENUM_MAX_ACTIONS = 6
FIX_REROUND_BUDGET = 512  # largest V * K for which the fix-and-reround polish runs


@dataclass(frozen=True)
class ActionSpec:
    kind: str
    latency: float
    rat: int = -1          # RAT index carrying the uplink, -1 for local
    node: int = -1         # compute node index (ECs, then the RC last), -1 for local
    serving: int = -1      # serving EC index for forwarded tasks
    a: float = 0.0         # bandwidth fraction of the RAT
    p: float = 0.0         # fraction of the node's cycles
    target: int = -1       # neighbor EC for kind 'neighbor'
    label: str = ""

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise DomainError(f"unknown action kind {self.kind!r}")
        if not self.latency > 0:
            raise DomainError("action latency must be positive")
        if self.kind != "local" and (self.rat < 0 or self.node < 0):
            raise DomainError("offload actions need a RAT and a compute node")
        if self.kind in ("neighbor", "rc") and self.serving < 0:
            raise DomainError("forwarded actions need a serving EC")
        if not (0.0 <= self.a <= 1.0 and 0.0 <= self.p):
            raise DomainError("resource fractions out of range")

    @property
    def offload(self) -> int:
        return int(self.kind != "local")

    @property
    def y(self) -> tuple:
        """(y_sr, y_rj, y_rc) indicators."""
        return (int(self.kind == "ec"), int(self.kind == "neighbor"), int(self.kind == "rc"))


def aop_cost(latency, L_prev, N_prev, N_next):
    """Q-area contributed by an update of duration ``latency``."""
    return (L_prev + N_prev) * latency + 0.5 * (latency + N_next) ** 2


@dataclass
class Stage:
    """One slot's decision problem."""
    actions: list
    n_rat: int
    n_node: int
    bits: np.ndarray
    fwd_cap: np.ndarray
    L_prev: np.ndarray | None = None
    N_prev: np.ndarray | None = None
    N_next: np.ndarray | None = None
    objective: str = "aop"

    def __post_init__(self):
        V = len(self.actions)
        if V == 0:
            raise DomainError("stage has no vehicles")
        if any(len(acts) == 0 for acts in self.actions):
            raise DomainError("every vehicle needs at least one action")
        if self.objective not in ("aop", "delay"):
            raise DomainError(f"unknown objective {self.objective!r}")
        self.bits = np.asarray(self.bits, dtype=np.float64).reshape(V)
        self.fwd_cap = np.asarray(self.fwd_cap, dtype=np.float64)
        z = np.zeros(V)
        self.L_prev = z.copy() if self.L_prev is None else np.asarray(self.L_prev, dtype=np.float64)
        self.N_prev = z.copy() if self.N_prev is None else np.asarray(self.N_prev, dtype=np.float64)
        self.N_next = z.copy() if self.N_next is None else np.asarray(self.N_next, dtype=np.float64)
        self._arrays = None

    @property
    def n_vehicles(self) -> int:
        return len(self.actions)

    def with_objective(self, objective: str) -> "Stage":
        return Stage(self.actions, self.n_rat, self.n_node, self.bits, self.fwd_cap,
                     self.L_prev, self.N_prev, self.N_next, objective)

    def action_cost(self, v: int, act: ActionSpec) -> float:
        if self.objective == "delay":
            return act.latency
        return aop_cost(act.latency, self.L_prev[v], self.N_prev[v], self.N_next[v])

    def arrays(self):
        """Padded (V, K) arrays: cost, a, p, rat, node, kind, serving."""
        if self._arrays is not None:
            return self._arrays
        V = self.n_vehicles
        K = max(len(acts) for acts in self.actions)
        cost = np.full((V, K), np.inf)
        a = np.zeros((V, K))
        p = np.zeros((V, K))
        rat = np.full((V, K), -1, dtype=np.int64)
        node = np.full((V, K), -1, dtype=np.int64)
        kind = np.zeros((V, K), dtype=np.int64)
        serving = np.full((V, K), -1, dtype=np.int64)
        for v, acts in enumerate(self.actions):
            for k, act in enumerate(acts):
                cost[v, k] = self.action_cost(v, act)
                a[v, k] = act.a
                p[v, k] = act.p
                rat[v, k] = act.rat
                node[v, k] = act.node
                kind[v, k] = KIND_CODES[act.kind]
                serving[v, k] = act.serving
        self._arrays = (cost, a, p, rat, node, kind, serving)
        return self._arrays

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.arrays()[0])

    def cost_scale(self) -> float:
        cost = self.arrays()[0]
        m = np.abs(np.min(cost, axis=1)).mean()
        return float(m) if m > 0 else 1.0

    def loads(self, pi):
        """RAT and node loads of a relaxed (V, K) policy matrix."""
        _, a, p, rat, node, _, _ = self.arrays()
        rat_load = np.zeros(self.n_rat)
        node_load = np.zeros(self.n_node)
        m = rat >= 0
        np.add.at(rat_load, rat[m], (pi * a)[m])
        m = node >= 0
        np.add.at(node_load, node[m], (pi * p)[m])
        return rat_load, node_load


def one_hot(stage: Stage, choice) -> np.ndarray:
    cost = stage.arrays()[0]
    pi = np.zeros_like(cost)
    pi[np.arange(stage.n_vehicles), np.asarray(choice)] = 1.0
    return pi


def is_feasible(stage: Stage, choice, tol: float = 1e-9) -> bool:
    """Plain check of bandwidth, compute and RC-admission constraints."""
    return not constraint_violations(stage, choice, tol)


def constraint_violations(stage: Stage, choice, tol: float = 1e-9) -> list:
    rat_used = {}
    node_used = {}
    fwd = {}
    rc_from = set()
    for v, k in enumerate(choice):
        act = stage.actions[v][k]
        if act.rat >= 0:
            rat_used[act.rat] = rat_used.get(act.rat, 0.0) + act.a
        if act.node >= 0:
            node_used[act.node] = node_used.get(act.node, 0.0) + act.p
        if act.kind in ("neighbor", "rc"):
            fwd[act.serving] = fwd.get(act.serving, 0.0) + float(stage.bits[v])
            if act.kind == "rc":
                rc_from.add(act.serving)
    out = [f"rat {s}" for s, u in sorted(rat_used.items()) if u > 1.0 + tol]
    out += [f"node {e}" for e, u in sorted(node_used.items()) if u > 1.0 + tol]
    out += [f"rc admission at ec {r}" for r in sorted(rc_from) if fwd[r] > stage.fwd_cap[r] * (1.0 + tol)]
    return out


def surrogate_objective(stage: Stage, choice) -> float:
    """Summed per-vehicle cost of an integer decision (Q-area or latency)."""
    return float(sum(stage.action_cost(v, stage.actions[v][k]) for v, k in enumerate(choice)))


def _check_multipliers(lam, mu):
    lam = np.asarray(lam, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(lam < 0) or np.any(mu < 0) or np.any(np.isnan(lam)) or np.any(np.isnan(mu)):
        raise DomainError("multipliers must be non-negative")
    return lam, mu


def lagrangian(stage: Stage, pi, lam, mu) -> float:
    """sum(pi * cost) + sum lambda (rat load - 1) + sum mu (node load - 1)."""
    lam, mu = _check_multipliers(lam, mu)
    cost = stage.arrays()[0]
    pi = np.asarray(pi, dtype=np.float64)
    valid = np.isfinite(cost)
    rl, nl = stage.loads(pi)
    return float((pi[valid] * cost[valid]).sum() + lam @ (rl - 1.0) + mu @ (nl - 1.0))


def _reduced(stage, lam, mu):
    cost, a, p, rat, node, _, _ = stage.arrays()
    lam_x = np.concatenate((lam, [0.0]))
    mu_x = np.concatenate((mu, [0.0]))
    with np.errstate(invalid="ignore"):
        pa = np.where(a > 0, lam_x[rat] * a, 0.0)
        pp = np.where(p > 0, mu_x[node] * p, 0.0)
    return cost + pa + pp


def dual_value(stage: Stage, lam, mu) -> float:
    """g(lambda, mu) = sum_v min_k reduced cost - sum lambda - sum mu.

    Returns ``-inf`` as the sentinel when the inner minimum is unbounded below.
    """
    lam, mu = _check_multipliers(lam, mu)
    if np.all(np.isfinite(lam)) and np.all(np.isfinite(mu)):
        cost, a, p, rat, node, _, _ = stage.arrays()
        _, best, _, _, _ = _kernels.relaxed_argmin(cost, a, p, rat, node, lam, mu)
        g = float(best.sum() - lam.sum() - mu.sum())
    else:
        red = _reduced(stage, lam, mu)
        g = float(red.min(axis=1).sum() - lam.sum() - mu.sum())
    if not np.isfinite(g) or g < -1e300:
        return -math.inf
    return g


def project_simplex_rows(Y, mask):
    """Euclidean projection of each row onto the probability simplex over ``mask``."""
    Ym = np.where(mask, Y, -np.inf)
    u = -np.sort(-Ym, axis=1)
    finite = np.isfinite(u)
    css = np.cumsum(np.where(finite, u, 0.0), axis=1) - 1.0
    ks = np.arange(1, Y.shape[1] + 1)[None, :]
    cond = finite & (u - css / ks > 0)
    rho = Y.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(Y.shape[0]), rho] / (rho + 1)
    return np.where(mask, np.maximum(Y - tau[:, None], 0.0), 0.0)


def _fd_gradient(stage, pi, lam, mu, rel_step=1e-5):
    mask = stage.valid_mask()
    grad = np.zeros_like(pi)
    base = np.abs(pi).max() if pi.size else 1.0
    h = rel_step * max(base, 1.0)
    for v, k in zip(*np.nonzero(mask)):
        up = pi.copy()
        dn = pi.copy()
        up[v, k] += h
        dn[v, k] -= h
        grad[v, k] = (lagrangian(stage, up, lam, mu) - lagrangian(stage, dn, lam, mu)) / (2 * h)
    return grad


@dataclass(frozen=True)
class KKT:
    stationarity: float
    comp_slack: float
    primal_viol: float
    dual_viol: float

    @property
    def max(self) -> float:
        return max(self.stationarity, self.comp_slack, self.primal_viol, self.dual_viol)

    def as_tuple(self):
        return (self.stationarity, self.comp_slack, self.primal_viol, self.dual_viol)


def kkt_residual(stage: Stage, pi, lam, mu, gradient: str = "fd") -> KKT:
    """KKT residual magnitudes of the relaxed problem, costs normalised by the stage scale.

    Stationarity is the infinity norm of e = Proj(pi - grad L) - pi with the
    gradient from central finite differences (``gradient='fd'``) or the
    closed form reduced costs (``'analytic'``).
    """
    lam = np.asarray(lam, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    scale = stage.cost_scale()
    if np.ndim(pi) == 1:
        pi = one_hot(stage, np.asarray(pi, dtype=np.int64))
    pi = np.asarray(pi, dtype=np.float64)
    mask = stage.valid_mask()
    dual_viol = float(max(0.0, -min(lam.min(initial=0.0), mu.min(initial=0.0))) / scale)
    lam_c = np.maximum(lam, 0.0)
    mu_c = np.maximum(mu, 0.0)
    if gradient == "fd":
        grad = _fd_gradient(stage, pi, lam_c, mu_c)
    elif gradient == "analytic":
        grad = np.where(mask, _reduced(stage, lam_c, mu_c), 0.0)
    else:
        raise DomainError(f"unknown gradient mode {gradient!r}")
    e = project_simplex_rows(pi - grad / scale, mask) - pi
    stationarity = float(np.abs(e[mask]).max())
    rl, nl = stage.loads(pi)
    slack_r = rl - 1.0
    slack_n = nl - 1.0
    comp = 0.0
    if lam.size:
        comp = max(comp, float(np.abs(lam * slack_r).max()))
    if mu.size:
        comp = max(comp, float(np.abs(mu * slack_n).max()))
    primal = float(max(0.0, slack_r.max(initial=-1.0), slack_n.max(initial=-1.0)))
    return KKT(stationarity, comp / scale, primal, dual_viol)


# ---------------------------------------------------------------------------
# solver

@dataclass
class SolveReport:
    choice: np.ndarray
    labels: list
    lam: np.ndarray
    mu: np.ndarray
    lam_vehicle: np.ndarray
    mu_vehicle: np.ndarray
    objective: float
    dual_value: float
    residual_history: list
    raw_residuals: list
    dual_history: list
    iterations: int
    converged: bool
    kkt: KKT
    kkt_integer: KKT
    relaxed: np.ndarray = field(repr=False)
    certified: bool = False

    @property
    def gap(self) -> float:
        return self.objective - self.dual_value

    @property
    def relative_gap(self) -> float:
        return self.gap / max(abs(self.objective), 1e-300)

    def records(self) -> list[dict]:
        out = []
        for v, k in enumerate(self.choice):
            out.append({"vehicle": v, "action": self.labels[v], "lambda": float(self.lam_vehicle[v]),
                        "mu": float(self.mu_vehicle[v])})
        return out


def _lp_relaxation(stage: Stage):
    """LP relaxation of the stage (library route); returns (pi, lam, mu, value) or None."""
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    cost, a, p, rat, node, _, _ = stage.arrays()
    scale = stage.cost_scale()
    V = stage.n_vehicles
    vs, ks = np.nonzero(np.isfinite(cost))
    n = len(vs)
    c = cost[vs, ks] / scale
    A_eq = coo_matrix((np.ones(n), (vs, np.arange(n))), shape=(V, n))
    rows, cols, vals = [], [], []
    used_r = sorted(set(rat[vs, ks][rat[vs, ks] >= 0].tolist()))
    used_n = sorted(set(node[vs, ks][node[vs, ks] >= 0].tolist()))
    r_row = {s: i for i, s in enumerate(used_r)}
    n_row = {e: len(used_r) + i for i, e in enumerate(used_n)}
    for i, (v, k) in enumerate(zip(vs, ks)):
        if rat[v, k] >= 0 and a[v, k] > 0:
            rows.append(r_row[rat[v, k]]); cols.append(i); vals.append(a[v, k])
        if node[v, k] >= 0 and p[v, k] > 0:
            rows.append(n_row[node[v, k]]); cols.append(i); vals.append(p[v, k])
    m = len(used_r) + len(used_n)
    kwargs = {}
    if m:
        kwargs["A_ub"] = coo_matrix((vals, (rows, cols)), shape=(m, n))
        kwargs["b_ub"] = np.ones(m)
    res = linprog(c, A_eq=A_eq, b_eq=np.ones(V), bounds=(0, None), method="highs", **kwargs)
    if res.status != 0:
        return None
    pi = np.zeros_like(cost)
    pi[vs, ks] = np.clip(res.x, 0.0, 1.0)
    lam = np.zeros(stage.n_rat)
    mu = np.zeros(stage.n_node)
    if m:
        duals = -res.ineqlin.marginals * scale
        duals = np.maximum(duals, 0.0)
        for s, i in r_row.items():
            lam[s] = duals[i]
        for e, i in n_row.items():
            mu[e] = duals[i]
    return pi, lam, mu, float(res.fun * scale)


def _round(stage, red, max_passes=5, pair_passes=0):
    cost, a, p, rat, node, kind, serving = stage.arrays()
    fwd = stage.fwd_cap if stage.fwd_cap.size else np.zeros(1)
    return _kernels.greedy_round(np.ascontiguousarray(red), cost, a, p, rat, node, kind, serving,
                                 stage.bits, stage.n_rat, stage.n_node, fwd, max_passes, pair_passes)


def _polish(stage, choice, passes=2):
    cost, a, p, rat, node, kind, serving = stage.arrays()
    fwd = stage.fwd_cap if stage.fwd_cap.size else np.zeros(1)
    return _kernels.pair_descent(choice.copy(), cost, a, p, rat, node, kind, serving, stage.bits,
                                 stage.n_rat, stage.n_node, fwd, passes)


def _fix_reround(stage, choice, red):
    """Pin one vehicle to each alternative action in turn and greedy-fill the rest;
    returns the best feasible result found (``choice`` itself if none is better)."""
    cost = stage.arrays()[0]
    rows = np.arange(stage.n_vehicles)
    best, best_obj = choice, float(cost[rows, choice].sum())
    for v in range(stage.n_vehicles):
        for k in np.flatnonzero(np.isfinite(cost[v])):
            if k == choice[v]:
                continue
            pinned = red.copy()
            pinned[v] = np.inf
            pinned[v, k] = red[v, k]
            ch = _round(stage, pinned)
            if np.all(ch >= 0):
                obj = float(cost[rows, ch].sum())
                if obj < best_obj - 1e-12 * abs(best_obj):
                    best, best_obj = ch, obj
    return best


def solve(stage: Stage, epsilon: float = 1e-4, max_outer: int = 200, eta0: float = 0.1,
          certify: bool = True, polish_passes: int = 2) -> SolveReport:
    """Projected-subgradient dual ascent with greedy rounding and repair.

    ``polish_passes`` rounds of two-vehicle exchanges refine the best rounding
    when the loop stops without meeting ``epsilon``; 0 skips them.  Small
    stages (V * K <= FIX_REROUND_BUDGET) also get fix-and-reround moves, which
    reach multi-vehicle reassignments the exchanges cannot.
    """
    if max_outer < 1:
        raise DomainError("max_outer must be at least 1")
    cost, a, p, rat, node, kind, serving = stage.arrays()
    V = stage.n_vehicles
    rows = np.arange(V)
    scale = stage.cost_scale()
    lam = np.zeros(stage.n_rat)
    mu = np.zeros(stage.n_node)

    best_choice = None
    best_obj = math.inf
    best_g = -math.inf
    best_mult = (lam.copy(), mu.copy())
    relaxed_sum = np.zeros_like(cost)
    raw, hist, ghist = [], [], []
    converged = False
    it = 0

    def consider(ch):
        nonlocal best_choice, best_obj
        if np.any(ch < 0):
            return
        obj = float(cost[rows, ch].sum())
        if best_choice is None or obj < best_obj - 1e-12 * abs(best_obj):
            best_choice, best_obj = ch.copy(), obj

    for it in range(1, max_outer + 1):
        choice, best, red, rl, nl = _kernels.relaxed_argmin(cost, a, p, rat, node, lam, mu)
        g = float(best.sum() - lam.sum() - mu.sum())
        ghist.append(g)
        if g > best_g:
            best_g = g
            best_mult = (lam.copy(), mu.copy())
        relaxed_sum[rows, choice] += 1.0
        consider(_round(stage, red))
        if best_choice is not None:
            res = kkt_residual(stage, best_choice, lam, mu, gradient="analytic").max
        else:
            res = math.inf
        raw.append(res)
        hist.append(min(res, hist[-1]) if hist else res)
        if res <= epsilon:
            converged = True
            break
        step = eta0 * scale / math.sqrt(it)
        lam = np.maximum(0.0, lam + step * (rl - 1.0))
        mu = np.maximum(0.0, mu + step * (nl - 1.0))

    if best_choice is None:
        consider(_round(stage, cost.copy()))

    relaxed = relaxed_sum / max(it, 1)
    certified = False
    if converged:
        lam_f, mu_f = lam, mu
        relaxed = one_hot(stage, best_choice)
        best_g = max(best_g, dual_value(stage, lam, mu))
    else:
        lam_f, mu_f = best_mult
        if certify:
            lp = _lp_relaxation(stage)
            if lp is not None:
                pi_lp, lam_lp, mu_lp, _ = lp
                consider(_round(stage, _reduced(stage, lam_lp, mu_lp)))
                lam_f, mu_f = lam_lp, mu_lp
                relaxed = pi_lp
                best_g = max(best_g, dual_value(stage, lam_lp, mu_lp))
                certified = True

    if best_choice is not None and not converged and polish_passes > 0:
        consider(_polish(stage, best_choice, polish_passes))
        if cost.size <= FIX_REROUND_BUDGET:
            red_f = _reduced(stage, lam_f, mu_f)
            for _ in range(polish_passes):
                before = best_obj
                for base in (red_f, cost):
                    consider(_fix_reround(stage, best_choice, np.ascontiguousarray(base)))
                consider(_polish(stage, best_choice, polish_passes))
                if best_obj >= before:
                    break

    if best_choice is None:
        rl, nl = stage.loads(relaxed)
        binding = [f"rat {s}" for s in np.flatnonzero(rl > 1 + 1e-9)]
        binding += [f"node {e}" for e in np.flatnonzero(nl > 1 + 1e-9)]
        raise InfeasibleError("no feasible rounding: capacities exceeded even with RC admission",
                              binding or ["rc admission"])

    kkt_relaxed = kkt_residual(stage, relaxed, lam_f, mu_f, gradient="analytic")
    kkt_int = kkt_residual(stage, best_choice, lam_f, mu_f, gradient="analytic")
    lam_x = np.concatenate((lam_f, [0.0]))
    mu_x = np.concatenate((mu_f, [0.0]))
    ch_rat = rat[rows, best_choice]
    ch_node = node[rows, best_choice]
    labels = [stage.actions[v][k].label or stage.actions[v][k].kind for v, k in enumerate(best_choice)]
    return SolveReport(
        choice=best_choice, labels=labels, lam=lam_f, mu=mu_f,
        lam_vehicle=lam_x[ch_rat], mu_vehicle=mu_x[ch_node],
        objective=best_obj, dual_value=best_g, residual_history=hist, raw_residuals=raw,
        dual_history=ghist, iterations=it, converged=converged, kkt=kkt_relaxed, kkt_integer=kkt_int,
        relaxed=relaxed, certified=certified,
    )


def enumerate_policies(stage: Stage):
    """Exhaustive optimum over joint integer actions; returns (choice, objective)."""
    V = stage.n_vehicles
    K = max(len(acts) for acts in stage.actions)
    if V > ENUM_MAX_VEHICLES or K > ENUM_MAX_ACTIONS:
        raise DomainError(f"enumeration refuses {V} vehicles x {K} actions "
                          f"(limit {ENUM_MAX_VEHICLES} x {ENUM_MAX_ACTIONS})")
    best = None
    best_obj = math.inf
    for combo in itertools.product(*(range(len(acts)) for acts in stage.actions)):
        if not is_feasible(stage, combo):
            continue
        obj = surrogate_objective(stage, combo)
        if obj < best_obj:
            best, best_obj = combo, obj
    if best is None:
        raise InfeasibleError("no feasible joint action", ["all"])
    return np.array(best, dtype=np.int64), best_obj


def feasible_policies(stage: Stage):
    """Every feasible joint action of an enumerable stage."""
    for combo in itertools.product(*(range(len(acts)) for acts in stage.actions)):
        if is_feasible(stage, combo):
            yield combo


# ---------------------------------------------------------------------------
# fixtures

def random_stage(rng: np.random.Generator, n_vehicles: int = 4, n_ec: int = 2, n_rat: int = 2,
                 objective: str = "aop", max_neighbors: int = 2, tight: bool = True) -> Stage:
    """Small random stage with at most 3 + max_neighbors actions per vehicle."""
    n_node = n_ec + 1
    rc = n_ec
    rat_ec = rng.integers(0, n_ec, size=n_rat)
    actions = []
    bits = rng.uniform(3.2e8, 1.6e9, size=n_vehicles)
    for v in range(n_vehicles):
        base = rng.uniform(50.0, 150.0)
        acts = [ActionSpec("local", base * rng.uniform(1.3, 2.0), label="local")]
        s = int(rng.integers(0, n_rat))
        r = int(rat_ec[s])
        a = float(rng.uniform(0.2, 0.7)) if tight else 0.05
        tx = rng.uniform(1.0, 10.0)
        acts.append(ActionSpec("ec", base * rng.uniform(0.6, 0.9) + tx, rat=s, node=r,
                               a=a, p=float(rng.uniform(0.4, 1.0)) if tight else 0.1, label=f"ec{r}"))
        others = [j for j in range(n_ec) if j != r][:max_neighbors]
        for j in others:
            acts.append(ActionSpec("neighbor", base * rng.uniform(0.7, 1.0) + tx + 0.5, rat=s, node=j,
                                   serving=r, a=a, p=float(rng.uniform(0.4, 1.0)) if tight else 0.1,
                                   target=j, label=f"nb{j}"))
        acts.append(ActionSpec("rc", base * rng.uniform(0.8, 1.2) + tx + 1.0, rat=s, node=rc, serving=r,
                               a=a, p=float(rng.uniform(0.3, 0.8)) if tight else 0.1, label="rc"))
        actions.append(acts)
    fwd = rng.uniform(1.0e9, 3.0e9, size=n_ec)
    L_prev = rng.uniform(50.0, 200.0, size=n_vehicles)
    N_prev = rng.uniform(0.0, 1.0, size=n_vehicles)
    N_next = rng.uniform(0.0, 1.0, size=n_vehicles)
    return Stage(actions, n_rat, n_node, bits, fwd, L_prev, N_prev, N_next, objective)


# ---------------------------------------------------------------------------
# stationary policy over binned states

@dataclass
class Policy:
    """Maps a binned state (L_prev, N, L_estimate) to an action kind, per vehicle."""
    edges_L: np.ndarray
    edges_N: np.ndarray
    table: dict = field(default_factory=dict)
    default: str = "local"

    @classmethod
    def from_samples(cls, L_samples, N_samples, bins: int = 10) -> "Policy":
        q = np.linspace(0, 1, bins + 1)[1:-1]
        return cls(np.quantile(np.asarray(L_samples, float), q), np.quantile(np.asarray(N_samples, float), q))

    def state(self, L_prev, N, L_est) -> tuple:
        return (int(np.searchsorted(self.edges_L, L_prev, side="right")),
                int(np.searchsorted(self.edges_N, N, side="right")),
                int(np.searchsorted(self.edges_L, L_est, side="right")))

    def record(self, vehicle, state, kind):
        self.table[(vehicle, state)] = kind

    def action(self, vehicle, state) -> str:
        return self.table.get((vehicle, state), self.default)
