"""Compare the numba kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--episodes 4]

Per-kernel timings call both variants in-process. The end-to-end numbers run
a short benchmark in a subprocess once per value of STEAM_MAPF_NUMBA, since
the backend is chosen at import time.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from steam_mapf import _kernels as K


def _inputs(seed=0):
    rng = np.random.default_rng(seed)
    h = w = 64
    weights = rng.uniform(1.0, 3.0, size=(h, w))
    weights[rng.random((h, w)) < 0.2] = np.inf
    free = np.flatnonzero(np.isfinite(weights.ravel()))
    target = int(free[0])
    cost = K.dijkstra_py(weights.ravel(), h, w, target)
    reach = np.flatnonzero(np.isfinite(cost))
    start = int(reach[-1])
    traj = rng.integers(0, h * w // 8, size=(64, 129)).astype(np.int64)
    pos = rng.integers(0, 32, size=(257, 64, 2)).astype(np.int64)
    return weights.ravel(), h, w, target, cost, start, traj, pos


def kernel_table(repeat):
    flat, h, w, target, cost, start, traj, pos = _inputs()
    cases = {
        "dijkstra 64x64": (lambda f: f(flat, h, w, target), K.dijkstra_jit, K.dijkstra_py),
        "descend 64x64": (lambda f: f(cost, h, w, start), K.descend_jit, K.descend_py),
        "coincidences 64x129": (lambda f: f(traj), K.coincidences_jit, K.coincidences_py),
        "density 257x64": (lambda f: f(pos, 5, True), K.density_jit, K.density_py),
    }
    rows = []
    for name, (call, jit, py) in cases.items():
        call(jit)  # compile
        tj = min(timeit.repeat(lambda: call(jit), number=1, repeat=repeat))
        tp = min(timeit.repeat(lambda: call(py), number=1, repeat=repeat))
        rows.append((name, tj * 1e3, tp * 1e3, tp / tj))
    return rows


EPISODE_SNIPPET = """
import json, time
from steam_mapf import _kernels
from steam_mapf.bench import RunConfig, run_benchmark
from steam_mapf.scengen import GenSpec
run_benchmark(RunConfig(gen=GenSpec("random", 16, 16, 0.2, 8, 0), episodes=1, seed=123))
t0 = time.perf_counter()
rep = run_benchmark(RunConfig(gen=GenSpec("random", 32, 32, 0.2, 32, 0), episodes={episodes}, seed=7))
print(json.dumps({{"backend": _kernels.BACKEND, "wall_s": time.perf_counter() - t0,
                  "step_ms_on": rep["arms"]["on"]["timing"]["runtime_ms"]["mean"],
                  "step_ms_off": rep["arms"]["off"]["timing"]["runtime_ms"]["mean"]}}))
"""


def episode_table(episodes):
    out = []
    for flag in ("1", "0"):
        env = dict(os.environ, STEAM_MAPF_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, "-c", EPISODE_SNIPPET.format(episodes=episodes)],
            env=env, capture_output=True, text=True, check=True,
        )
        out.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=4)
    args = ap.parse_args()

    print(f"{'kernel':<22}{'numba ms':>10}{'python ms':>11}{'speedup':>9}")
    for name, tj, tp, sp in kernel_table(args.repeat):
        print(f"{name:<22}{tj:>10.3f}{tp:>11.3f}{sp:>8.1f}x")
    print()
    print(f"{'backend':<10}{'wall s':>8}{'step ms off':>13}{'step ms on':>12}")
    for r in episode_table(args.episodes):
        print(f"{r['backend']:<10}{r['wall_s']:>8.2f}{r['step_ms_off']:>13.3f}{r['step_ms_on']:>12.3f}")


if __name__ == "__main__":
    main()
