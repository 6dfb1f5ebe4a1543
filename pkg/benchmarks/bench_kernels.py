"""Time the hot kernels under numba and under the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py            # both backends, side by side
    python3 benchmarks/bench_kernels.py --single   # only the backend live in this process

The numpy run happens in a child process with AOPOFFLOAD_NO_NUMBA=1 because the
backend is fixed at import time.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def run_single(repeat: int) -> dict:
    from aopoffload import _kernels as k
    from aopoffload import optimizer
    from aopoffload.clustering import similarity_matrix

    rng = np.random.default_rng(0)
    S = similarity_matrix(rng.uniform(0, 3000, size=(125, 2)))
    R = np.zeros_like(S)
    A = np.zeros_like(S)
    L = rng.uniform(0.1, 2.0, 10_000)
    N = rng.uniform(0.0, 1.0, 10_000)
    K = np.concatenate(([0.0], np.cumsum(L + N)[:-1]))
    M = K + L
    stage = optimizer.random_stage(rng, n_vehicles=100, n_ec=20, n_rat=10, max_neighbors=4)
    cost, a, p, rat, node, kind, serving = stage.arrays()
    lam = rng.uniform(0, 10, stage.n_rat)
    mu = rng.uniform(0, 10, stage.n_node)
    _, _, red, _, _ = k.relaxed_argmin(cost, a, p, rat, node, lam, mu)
    fwd = stage.fwd_cap
    choice = k.greedy_round(red, cost, a, p, rat, node, kind, serving, stage.bits, stage.n_rat, stage.n_node, fwd)

    cases = {
        "ap_sweep[125]": lambda: k.ap_sweep(S, R, A, 0.5),
        "q_areas[10k]": lambda: k.q_areas(L, N),
        "sawtooth_integral[10k]": lambda: k.sawtooth_integral(K, M, M[0], M[-1]),
        "relaxed_argmin[100x7]": lambda: k.relaxed_argmin(cost, a, p, rat, node, lam, mu),
        "greedy_round[100x7]": lambda: k.greedy_round(red, cost, a, p, rat, node, kind, serving, stage.bits,
                                                      stage.n_rat, stage.n_node, fwd),
        "pair_descent[100x7]": lambda: k.pair_descent(choice, cost, a, p, rat, node, kind, serving, stage.bits,
                                                      stage.n_rat, stage.n_node, fwd),
    }
    return {"backend": k.BACKEND, "seconds": {name: _time(fn, repeat) for name, fn in cases.items()}}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--single", action="store_true")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="machine-readable output (used by the child run)")
    args = ap.parse_args(argv)
    if args.single or args.json:
        res = run_single(args.repeat)
        if args.json:
            print(json.dumps(res))
        else:
            for name, t in res["seconds"].items():
                print(f"{res['backend']:>6s}  {name:<26s} {t * 1e3:10.3f} ms")
        return 0
    results = []
    for flag in ("0", "1"):
        env = dict(os.environ, AOPOFFLOAD_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--json", "--repeat", str(args.repeat)], env=env,
                             capture_output=True, text=True, check=True)
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))
    a, b = results
    print(f"{'kernel':<26s} {a['backend']:>12s} {b['backend']:>12s} {'ratio':>8s}")
    for name in a["seconds"]:
        ta, tb = a["seconds"][name], b["seconds"][name]
        print(f"{name:<26s} {ta * 1e3:10.3f}ms {tb * 1e3:10.3f}ms {tb / ta:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
