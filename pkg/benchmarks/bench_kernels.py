"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--end-to-end]

Each kernel is called once before timing so compilation is excluded.
``--end-to-end`` also times a short hallway run in a subprocess per backend,
since the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from myopic_mtrl import kernels
from myopic_mtrl.mdp import greedy_actions, random_mdp
from myopic_mtrl.tasks import hallway_task


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(S=30, A=4, H=10, d=32, seed=0):
    rng = np.random.default_rng(seed)
    M = random_mdp(rng, S, A, H)
    pi = rng.dirichlet(np.ones(A), size=(H, S))
    pi_cum = np.cumsum(pi, axis=-1)
    acts = greedy_actions(rng.random((H + 1, S, A)), H)
    count = rng.integers(0, 5, size=(H, S, A)).astype(np.float64)
    reward_sum = count * rng.random((H, S, A))
    next_count = rng.multinomial(1, np.ones(S) / S, size=(H, S, A)).astype(np.float64) * count[..., None]
    u = rng.random(2 * H)
    X = rng.standard_normal((d, d))
    C = X @ X.T
    return {
        "occupancy": ("occupancy", (M.P, pi, M.s1)),
        "evaluate": ("evaluate", (M.P, M.R, pi)),
        "evaluate_actions": ("evaluate_actions", (M.P, M.R, acts, M.s1)),
        "optimal": ("optimal", (M.P, M.R)),
        "fqi_counts": ("fqi_counts", (count, reward_sum, next_count, 0.0)),
        "sample": ("sample", (M.P_cum, M.R, pi_cum, M.s1, u)),
        "max_reach": ("max_reach", (M.P, M.s1)),
        f"jacobi_eigenvalues(d={d})": ("jacobi_eigenvalues", (C, 1e-12, 100)),
    }


END_TO_END = """
import time
from myopic_mtrl.engine import run_algorithm1
from myopic_mtrl.exploration import default_schedule
from myopic_mtrl.tasks import gen_hallway
_, tasks = gen_hallway(8)
run_algorithm1(tasks, default_schedule(8), 5)
t0 = time.perf_counter()
run_algorithm1(tasks, default_schedule(8), 300, seed=1)
print(time.perf_counter() - t0)
"""


def end_to_end(backend):
    env = dict(os.environ, MYOPIC_MTRL_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()

    # sanity: the hallway kernels agree before we time anything
    M = hallway_task(6, 6)
    assert np.allclose(kernels.optimal_nb(M.P, M.R)[0], kernels.optimal_np(M.P, M.R)[0])

    print(f"{'kernel':<28}{'numba (us)':>12}{'numpy (us)':>12}{'speedup':>10}")
    for label, (name, args_) in cases().items():
        nb = best_of(lambda: getattr(kernels, name + "_nb")(*args_), args.repeat)
        npy = best_of(lambda: getattr(kernels, name + "_np")(*args_), args.repeat)
        print(f"{label:<28}{nb * 1e6:>12.1f}{npy * 1e6:>12.1f}{npy / nb:>10.1f}")

    if args.end_to_end:
        nb, npy = end_to_end("numba"), end_to_end("numpy")
        print(f"\nhallway(8), 300 rounds: numba {nb:.2f}s  numpy {npy:.2f}s  ({npy / nb:.1f}x)")


if __name__ == "__main__":
    main()
