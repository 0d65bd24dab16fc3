"""Time the numba kernels against their pure-numpy fallbacks.

Run ``python3 benchmarks/bench_kernels.py``. The last section runs a short
search in two subprocesses, one with ``PROFTREE_NO_JIT=1``, and checks that
both paths evolve the same tree.
"""

import os
import subprocess
import sys
import timeit

import numpy as np

from proftree import synth_churn
from proftree import genome as gn
from proftree import kernels
from proftree.baseline import fit_greedy

EVOLVE_SNIPPET = """
import time
from proftree import synth_churn, ProfitParams, EvolveConfig, evolve
from proftree.tree import to_json
d, _ = synth_churn(2000, 0.3, 4, 1, seed=1)
cfg = EvolveConfig(lam=0.1, min_iterations=60, convergence_window=20, max_iterations=60, seed=3)
evolve(d, ProfitParams(), EvolveConfig(min_iterations=2, convergence_window=1, max_iterations=2))
t0 = time.perf_counter()
res = evolve(d, ProfitParams(), cfg)
print(time.perf_counter() - t0)
print(to_json(res.best))
"""


def best_of(fn, number, repeat=5):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    data, _ = synth_churn(2000, 0.3, 4, 1, seed=0)
    view = gn.TrainView(data)
    g = gn.from_tree(fit_greedy(data), view)
    fl = gn.Flat(g, view.nlev)
    args = (view.codes, view.y, fl.feat, fl.thr, fl.iscat, fl.catmask, fl.left, fl.right)
    a = kernels.route_jit(*args)
    b = kernels.route_numpy(*args)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    rows = [("route (2000 rows, %d nodes)" % fl.feat.size, best_of(lambda: kernels.route_jit(*args), 200),
             best_of(lambda: kernels.route_numpy(*args), 20))]

    rng = np.random.default_rng(0)
    k = 200
    nc = rng.integers(0, 10, k).astype(np.float64)
    nn = rng.integers(0, 10, k).astype(np.float64)
    nc[0] += 1
    nn[-1] += 1
    pa = (200.0, 0.05, 0.005, 6.0, 14.0)
    ej = kernels._empc_jit(nc, nn, *pa)
    ep = kernels._empc_py(nc, nn, *pa)
    assert abs(ej[0] - ep[0]) < 1e-9 and abs(ej[1] - ep[1]) < 1e-12
    rows.append(("empc (%d score groups)" % k, best_of(lambda: kernels._empc_jit(nc, nn, *pa), 500),
                 best_of(lambda: kernels._empc_py(nc, nn, *pa), 20)))

    print(f"{'kernel':<32} {'numba (us)':>12} {'numpy (us)':>12} {'speedup':>8}")
    for name, tj, tp in rows:
        print(f"{name:<32} {tj * 1e6:>12.1f} {tp * 1e6:>12.1f} {tp / tj:>8.1f}")

    outs = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, PROFTREE_NO_JIT=flag)
        res = subprocess.run([sys.executable, "-c", EVOLVE_SNIPPET], env=env, capture_output=True, text=True, check=True)
        secs, tree = res.stdout.split("\n", 1)
        outs[label] = (float(secs), tree)
    print(f"{'evolve 60 iterations x 100':<32} {outs['numba'][0] * 1e6:>12.0f} {outs['numpy'][0] * 1e6:>12.0f} "
          f"{outs['numpy'][0] / outs['numba'][0]:>8.1f}")
    print("same tree on both paths:", outs["numba"][1] == outs["numpy"][1])


if __name__ == "__main__":
    main()
