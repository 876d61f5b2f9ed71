"""Compare the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings are taken in-process (after a warm-up call so JIT compile time
is excluded). The episode timing runs a full simulation in a fresh interpreter
per backend, selected with PSMP_DISABLE_NUMBA, and includes import/JIT cost.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from psmp import _kernels as K

EPISODE = """
import time
from psmp.policy import Timeout
from psmp.simcore import SimConfig, run_episode
from psmp.workload import JobSpec, WorkloadTrace
import numpy as np
rng = np.random.default_rng(0)
t, jobs = 0, []
for i in range(4000):
    t += int(rng.exponential(300))
    jobs.append(JobSpec(i + 1, t, int(rng.integers(60, 20000)), int(rng.integers(1, 33))))
trace = WorkloadTrace(jobs, label="bench")
t0 = time.perf_counter()
run_episode(trace, Timeout(15), SimConfig(node_count=128))
print(time.perf_counter() - t0)
"""


def bench_integrate(m, repeat):
    rng = np.random.default_rng(0)
    pstate = rng.integers(0, 4, m).astype(np.int8)
    computing = (pstate == K.ACTIVE) & (rng.random(m) < 0.5)
    powers = np.array([190.0, 9.0, 190.0, 9.0])
    acc = [np.zeros(m) for _ in range(6)]
    out = {}
    for name, fn in (("numpy", K.integrate_nodes_numpy), ("numba", getattr(K, "integrate_nodes_numba", None))):
        if fn is None:
            continue
        fn(pstate, computing, 60.0, powers, *acc)
        n = 2000
        out[name] = min(timeit.repeat(lambda: fn(pstate, computing, 60.0, powers, *acc), number=n, repeat=repeat)) / n
    return out


def bench_ecdf(n, repeat):
    gaps = np.sort(np.random.default_rng(1).exponential(5.0, n).round())
    out = {}
    for name, fn in (("numpy", K.ecdf_exponential_rmse_numpy), ("numba", getattr(K, "ecdf_exponential_rmse_numba", None))):
        if fn is None:
            continue
        fn(gaps, 5.0)
        out[name] = min(timeit.repeat(lambda: fn(gaps, 5.0), number=50, repeat=repeat)) / 50
    return out


def bench_episode():
    out = {}
    for name, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, PSMP_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", EPISODE], env=env, capture_output=True, text=True, check=True)
        out[name] = float(res.stdout.strip())
    return out


def show(label, times):
    scale, unit = (1e3, "ms") if max(times.values()) > 0.01 else (1e6, "us")
    cells = "  ".join(f"{k} {v * scale:9.1f} {unit}" for k, v in times.items())
    ratio = times["numpy"] / times["numba"] if "numba" in times else float("nan")
    print(f"{label:<28}{cells}  speedup {ratio:5.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"backend in this process: {K.BACKEND}")
    for m in (128, 1024):
        show(f"integrate_nodes m={m}", bench_integrate(m, args.repeat))
    for n in (10_000, 200_000):
        show(f"ecdf_rmse n={n}", bench_ecdf(n, args.repeat))
    show("episode 4000 jobs/128 nodes", bench_episode())


if __name__ == "__main__":
    main()
