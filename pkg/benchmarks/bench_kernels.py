"""Time the numba and numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--sizes 150,300,600] [--repeat 50]

Both backends are imported in one process through ``BACKEND_KERNELS``; the
``SRGM_BACKEND`` environment flag only changes which one the library uses by
default. A full regularization path is timed per backend by running the
path in a subprocess with the flag set.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from srgm.kernels import BACKEND_KERNELS

PATH_SNIPPET = """
import time, numpy as np
from srgm.rng import make_rng
from srgm.simulation import true_theta, sample_covariates
from srgm.graph import sample_srgm
from srgm.solver import FitConfig, lambda_max, lambda_grid, path
n = {n}
rng = make_rng(7)
theta = true_theta(n, 6)
Z = sample_covariates(n, 2, rng)
g = sample_srgm(theta, Z, rng)
cfg = FitConfig()
lmax, null = lambda_max(g, Z, cfg)
path(g, Z, lambda_grid(lmax, 5), cfg, warm=null)  # warm-up / compile
t = time.perf_counter()
lmax, null = lambda_max(g, Z, cfg)
path(g, Z, lambda_grid(lmax), cfg, warm=null)
print(time.perf_counter() - t)
"""


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        N = n * (n - 1)
        alpha, beta = rng.random(n), rng.random(n)
        zg = rng.normal(size=N)
        a_ind = (rng.random(N) < 0.1).astype(float)
        u = rng.integers(0, n, size=2 * n)
        v = rng.integers(0, n, size=2 * n)
        calls = {
            "predictor": lambda k: k["predictor"](alpha, beta, -1.0, zg),
            "loss_value": lambda k: k["loss_value"](alpha, beta, -1.0, zg, a_ind),
            "loss_and_grad": lambda k: k["loss_and_grad"](alpha, beta, -1.0, zg, a_ind),
            "weighted_cross": lambda k: k["weighted_cross"](alpha, beta, -1.0, zg),
            "component_roots": lambda k: k["component_roots"](n, u, v),
        }
        for name, call in calls.items():
            times = {}
            for backend, kern in BACKEND_KERNELS.items():
                call(kern)  # compile
                times[backend] = min(timeit.repeat(lambda: call(kern), number=1, repeat=repeat))
            rows.append((n, name, times))
    return rows


def bench_path(n):
    out = {}
    for backend in BACKEND_KERNELS:
        env = dict(os.environ, SRGM_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", PATH_SNIPPET.format(n=n)], env=env,
                             capture_output=True, text=True, check=True)
        out[backend] = float(res.stdout.strip().splitlines()[-1])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="150,300")
    ap.add_argument("--repeat", type=int, default=30)
    ap.add_argument("--path-n", type=int, default=150, help="n for the path timing (0 to skip)")
    args = ap.parse_args()
    sizes = [int(x) for x in args.sizes.split(",")]
    backends = list(BACKEND_KERNELS)
    print(f"{'n':>5} {'kernel':<16}" + "".join(f"{b + ' ms':>12}" for b in backends))
    for n, name, times in bench_kernels(sizes, args.repeat):
        print(f"{n:>5} {name:<16}" + "".join(f"{1e3 * times[b]:>12.3f}" for b in backends))
    if args.path_n:
        times = bench_path(args.path_n)
        print(f"\n50-point path at n={args.path_n}: "
              + ", ".join(f"{b} {t:.2f} s" for b, t in times.items()))


if __name__ == "__main__":
    main()
