"""Timing comparison of the compiled and pure-Python permanent kernels.

Runs the three hot entry points (plain permanent, permanent plus weighted
numerator, minors matrix) on random row-scaled weight matrices and prints a
table of per-call times with the speedup and the worst relative disagreement
between the two backends.

Usage:
    python3 benchmarks/bench_permanent.py [--sizes 6 8 10 12 14] [--repeats 5]
"""

import argparse
import time

import numpy as np

from schrochaos import _fallback
from schrochaos.measures import stream

try:
    from schrochaos import _kernels as _compiled
except ImportError:
    _compiled = None


def random_scaled(rng, n):
    # matches what the estimator feeds the backend: positive entries with
    # each row peaking at one
    w = rng.uniform(0.05, 1.0, size=(n, n))
    return w / w.max(axis=1, keepdims=True)


def time_call(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def rel_gap(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    scale = np.maximum(np.abs(a), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def fmt(seconds):
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:8.2f} ms"
    return f"{seconds:8.2f} s "


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[6, 8, 10, 12, 14])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _compiled is None:
        print("compiled extension not available; timing the fallback only")
    rng = stream(args.seed, 0)

    entry_points = ("permanent_scaled", "value_and_numerator", "minors_matrix")
    for entry in entry_points:
        print(f"\n{entry}")
        header = f"{'n':>4}  {'python':>11}"
        if _compiled is not None:
            header += f"  {'c':>11}  {'speedup':>8}  {'rel gap':>9}"
        print(header)
        for n in args.sizes:
            w = random_scaled(rng, n)
            call_args = (w, w * rng.uniform(0.0, 2.0, size=(n, n))) if (
                entry == "value_and_numerator"
            ) else (w,)
            py_time, py_out = time_call(getattr(_fallback, entry), call_args, args.repeats)
            line = f"{n:>4}  {fmt(py_time)}"
            if _compiled is not None:
                c_time, c_out = time_call(getattr(_compiled, entry), call_args, args.repeats)
                line += (
                    f"  {fmt(c_time)}  {py_time / c_time:>7.1f}x"
                    f"  {rel_gap(py_out, c_out):>9.1e}"
                )
            print(line)


if __name__ == "__main__":
    main()
