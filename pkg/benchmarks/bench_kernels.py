"""Time the numba kernels against their pure-numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--no-fit]

Kernel timings are best-of-``repeat`` after one warm-up call (which also
triggers JIT compilation). The end-to-end section fits the bundled K=3 toy
fixture once per backend in a fresh interpreter, so ``PTSE_DISABLE_NUMBA`` is
honoured at import time.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit
from pathlib import Path

import numpy as np

from ptse import kernels

ROOT = Path(__file__).resolve().parents[1]

FIT_SNIPPET = """
import time, warnings
from ptse import backend
from ptse.estimator import FitConfig, fit
from ptse.io import read_dataset
frame = read_dataset({path!r}).to_frame(0.5)
warnings.simplefilter("ignore")
start = time.perf_counter()
fit(frame, FitConfig(max_iters=20, seed=0))
print(backend(), time.perf_counter() - start)
"""


def cases(rng):
    K, T = 5, 5000
    lik = rng.exponential(size=(T, K)) + 1e-6
    A = rng.uniform(0.05, 1, (K, K))
    A /= A.sum(axis=1, keepdims=True)
    pi = np.full(K, 1.0 / K)
    _, c, _ = kernels.NUMPY_KERNELS["forward"](lik, A, pi)
    centers, coefs = rng.normal(size=2000), rng.uniform(size=2000)
    x = rng.normal(size=2000)
    values = rng.normal(size=(20, 2000))
    weights = rng.uniform(size=2000)
    big = rng.uniform(0.05, 1, (10, 10))
    big /= big.sum(axis=1, keepdims=True)
    return {
        "forward": (lik, A, pi),
        "backward": (lik, A, c),
        "mixture_pdf": (centers, coefs, 0.3, x),
        "mixture_cdf": (centers, coefs, 0.3, x),
        "self_mixture_pdf": (centers, coefs, 0.3),
        "linear_binning": (values, weights, -6.0, 12.0 / 511, 512),
        "power_iteration": (big, np.full(10, 0.1), 1e-12, 10**6),
        "sample_chain": (np.cumsum(A, axis=1), np.cumsum(pi), rng.random(100_000)),
    }


def bench_kernels(repeat: int) -> None:
    print(f"{'kernel':<18}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, args in cases(np.random.default_rng(0)).items():
        row = []
        for table in (kernels.NUMBA_KERNELS, kernels.NUMPY_KERNELS):
            fn = table[name]
            fn(*args)
            row.append(min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)) * 1e3)
        print(f"{name:<18}{row[0]:>12.3f}{row[1]:>12.3f}{row[1] / row[0]:>9.1f}x")


def bench_fit() -> None:
    path = str(ROOT / "tests" / "fixtures" / "toy_k3.csv")
    print("\nend-to-end fit, toy_k3, 20 EM iterations (includes JIT warm-up for numba)")
    for flag in ("0", "1"):
        env = dict(os.environ, PTSE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET.format(path=path)], env=env, capture_output=True, text=True, check=True)
        name, seconds = out.stdout.split()
        print(f"  {name:<8}{float(seconds):8.2f} s")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--no-fit", action="store_true", help="skip the end-to-end fit comparison")
    args = parser.parse_args()
    bench_kernels(args.repeat)
    if not args.no_fit:
        bench_fit()


if __name__ == "__main__":
    main()
