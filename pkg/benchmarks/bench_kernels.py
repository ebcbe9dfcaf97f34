"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Times each kernel on fixed inputs and then whole PBD/PBA runs on a Sin
stream, once per backend, and prints the speedup.
"""

import argparse
import timeit

import numpy as np

from epdp import kernels
from epdp.mechanisms import PBA, PBD
from epdp.model import PrivacyRequirement
from epdp.noise import RandomSource
from epdp.streams import gen_sin


def kernel_cases():
    rng = np.random.default_rng(0)
    n, d = 100_000, 10
    values = rng.integers(-1, d, n)
    budgets = rng.choice([0.05, 0.1, 0.2, 0.5, 1.0], n)
    u = rng.random(n)
    u2 = rng.random(n)
    g_vals = np.sort(rng.uniform(0.05, 2.0, 40))
    g_counts = rng.integers(1, 50, 40).astype(np.float64)
    dense = rng.random((2000, 1000)) * 0.01
    windows = rng.integers(1, 200, 1000)
    return {
        "obs_scan (40 groups)": lambda: kernels.obs_scan(g_vals, g_counts, 1.0),
        "sampled_histogram (1e5 users)": lambda: kernels.sampled_histogram(values, budgets, 0.5, u, d),
        "rr_estimate (1e5 users)": lambda: kernels.rr_estimate(values, budgets, u, u2, d),
        "window_sums (2000 x 1000)": lambda: kernels.window_sums(dense, windows),
    }


def mechanism_cases():
    stream = gen_sin(1000, 500, rng=RandomSource(1))
    rng = np.random.default_rng(2)
    reqs = [
        PrivacyRequirement(i, int(rng.choice([10, 20, 40])), float(rng.choice([0.2, 0.5, 1.0])))
        for i in range(1000)
    ]

    def run(cls):
        return lambda: cls(reqs, 2, RandomSource(3)).run(stream)

    return {"PBD run (n=1000, T=500)": run(PBD), "PBA run (n=1000, T=500)": run(PBA)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = sorted(kernels.BACKENDS)
    cases = {**kernel_cases(), **mechanism_cases()}
    print(f"{'case':34s} " + " ".join(f"{b + ' ms':>12s}" for b in backends) + "   speedup")
    for name, fn in cases.items():
        best = {}
        for b in backends:
            with kernels.use_backend(b):
                fn()  # warm up
                number = 1 if "run" in name else 10
                best[b] = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number * 1000
        speed = best["python"] / best["cython"] if "cython" in best else float("nan")
        print(f"{name:34s} " + " ".join(f"{best[b]:12.3f}" for b in backends) + f"   {speed:6.1f}x")


if __name__ == "__main__":
    main()
