"""Time the compiled and numpy kernels on the same integration problem.

Usage: python benchmarks/bench_kernels.py [--steps 2000] [--repeat 3]

Prints microseconds per Euler step for each backend and problem size, and
the largest parameter difference between the two after the run.
"""

import argparse
import time

import numpy as np

from flslab import kernels
from flslab.mixture import MixtureSpec, sample_dataset
from flslab.network import InitSpec, init_balanced

SIZES = [(50, 128, 64), (300, 128, 64), (20, 16, 64), (1000, 256, 128)]


def run(backend, data, state, steps, tau):
    mod = kernels.get_backend(backend)
    W, v = state.W.copy(), state.v.copy()
    pos = (data.y > 0).astype(np.uint8)
    t0 = time.perf_counter()
    mod.advance(data.X, data.y, pos, W, v, tau, 2.0 * data.n, steps, False, -1.0, 0.0)
    return time.perf_counter() - t0, W, v


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        kernels.get_backend("cython")
        backends = ["python", "cython"]
    except ImportError:
        print("compiled extension not built; timing the numpy kernels only")
        backends = ["python"]
    print(f"{'n':>6} {'d':>5} {'h':>5} " + " ".join(f"{b + ' us/step':>16}" for b in backends)
          + f" {'speedup':>8} {'max |diff|':>11}")
    for n, d, h in SIZES:
        data = sample_dataset(MixtureSpec(d=d, n=n, kappa=1.5, sigma=1.0, seed=0))
        state = init_balanced(InitSpec(h=h, alpha=1e-3, seed=0), d)
        tau = 0.1 / (2.0 * n * data.x_max**2)
        best, finals = {}, {}
        for b in backends:
            times = []
            for _ in range(args.repeat):
                dt, W, v = run(b, data, state, args.steps, tau)
                times.append(dt)
            best[b] = min(times) / args.steps * 1e6
            finals[b] = (W, v)
        line = f"{n:>6} {d:>5} {h:>5} " + " ".join(f"{best[b]:>16.1f}" for b in backends)
        if len(backends) == 2:
            diff = max(np.max(np.abs(finals["python"][0] - finals["cython"][0])),
                       np.max(np.abs(finals["python"][1] - finals["cython"][1])))
            line += f" {best['python'] / best['cython']:>8.2f} {diff:>11.2e}"
        print(line)


if __name__ == "__main__":
    main()
