import json
import os
import subprocess
import sys

import numpy as np
import pytest

from aopoffload import _kernels as k
from aopoffload import optimizer
from aopoffload.clustering import similarity_matrix


def test_ap_sweep_paths_agree():
    rng = np.random.default_rng(0)
    S = similarity_matrix(rng.uniform(0, 100, size=(20, 2)))
    R, A = np.zeros_like(S), np.zeros_like(S)
    for _ in range(5):
        R1, A1 = k.ap_sweep(S, R, A, 0.5)
        R2, A2 = k.ap_sweep_numpy(S, R.copy(), A.copy(), 0.5)
        R3, A3 = k._ap_sweep_loops(S, R.copy(), A.copy(), 0.5)
        assert np.allclose(R1, R2) and np.allclose(A1, A2)
        assert np.allclose(R1, R3) and np.allclose(A1, A3)
        R, A = R1, A1


def test_age_kernels_agree():
    rng = np.random.default_rng(1)
    L, N = rng.uniform(0.1, 2, 300), rng.uniform(0, 1, 300)
    for x, y in zip(k.q_areas_numpy(L, N), k._q_areas_loops(L, N)):
        assert np.allclose(x, y)
    K = np.concatenate(([0.0], np.cumsum(L + N)[:-1]))
    M = K + L
    for t0, t1 in ((M[0], M[-1]), (M[3] + 0.1, M[50] - 0.2), (M[7], M[7])):
        a = k.sawtooth_integral_numpy(K, M, t0, t1)
        assert a == pytest.approx(k._sawtooth_integral_loops(K, M, t0, t1), rel=1e-12)
        assert a == pytest.approx(k.sawtooth_integral(K, M, t0, t1), rel=1e-12)


def test_relaxed_argmin_agree():
    rng = np.random.default_rng(2)
    stage = optimizer.random_stage(rng, n_vehicles=12, n_ec=4, n_rat=3, max_neighbors=3)
    cost, a, p, rat, node, _, _ = stage.arrays()
    lam, mu = rng.uniform(0, 5, stage.n_rat), rng.uniform(0, 5, stage.n_node)
    outs = [f(cost, a, p, rat, node, lam, mu) for f in (k.relaxed_argmin, k.relaxed_argmin_numpy,
                                                         k._relaxed_argmin_loops)]
    for o in outs[1:]:
        for x, y in zip(outs[0], o):
            assert np.allclose(x, y)


def test_rounding_is_feasible():
    rng = np.random.default_rng(3)
    for _ in range(20):
        stage = optimizer.random_stage(rng, n_vehicles=8, n_ec=3, n_rat=2)
        cost, a, p, rat, node, kind, serving = stage.arrays()
        ch = k.greedy_round(cost.copy(), cost, a, p, rat, node, kind, serving, stage.bits, stage.n_rat,
                            stage.n_node, stage.fwd_cap)
        if np.all(ch >= 0):
            assert not optimizer.constraint_violations(stage, ch)
            better = k.pair_descent(ch, cost, a, p, rat, node, kind, serving, stage.bits, stage.n_rat,
                                    stage.n_node, stage.fwd_cap)
            assert not optimizer.constraint_violations(stage, better)
            assert optimizer.surrogate_objective(stage, better) <= optimizer.surrogate_objective(stage, ch) + 1e-9


SNIPPET = """
import json, numpy as np
from aopoffload import _kernels, optimizer
from aopoffload.aop import average_aop
from aopoffload.clustering import run_apacs
rng = np.random.default_rng(4)
st = optimizer.random_stage(rng, n_vehicles=6)
rep = optimizer.solve(st, max_outer=40)
print(json.dumps({"backend": _kernels.BACKEND, "choice": rep.choice.tolist(), "obj": rep.objective,
                  "aav": average_aop(np.linspace(1, 2, 50), np.linspace(0, 1, 50)),
                  "cs": run_apacs(rng.uniform(0, 100, size=(25, 2))).assignment.tolist()}))
"""


def _run(flag):
    env = dict(os.environ, AOPOFFLOAD_NO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_numpy_backend_matches_compiled_backend():
    fallback = _run("1")
    compiled = _run("0")
    assert fallback["backend"] == "numpy"
    assert compiled["backend"] == k.BACKEND
    assert fallback["choice"] == compiled["choice"] and fallback["cs"] == compiled["cs"]
    assert fallback["obj"] == pytest.approx(compiled["obj"], rel=1e-12)
    assert fallback["aav"] == pytest.approx(compiled["aav"], rel=1e-12)


def test_module_entry_point_runs_without_numba(tmp_path):
    env = dict(os.environ, AOPOFFLOAD_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-m", "aopoffload", "--version"], env=env, capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
