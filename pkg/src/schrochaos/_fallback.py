"""Pure NumPy backend for the permanent-family kernels.

Same inclusion-exclusion recursion as the compiled backend, but vectorized
over blocks of column subsets instead of walking them one Gray-code step at
a time.  Every routine here assumes the caller has already validated and
row-scaled its input; see :mod:`schrochaos.estimator` for the wrappers.
"""

import math

import numpy as np

NAME = "python"

# Subsets are processed in blocks so the (rows, n) intermediates stay small
# enough to be cache friendly even at the n = 20 size cap.
_BLOCK_BITS = 14


def _subset_block(lo: int, hi: int, n: int):
    """Bit table and signs for the subset range [lo, hi).

    Returns the (hi - lo, n) 0/1 float matrix of column membership and the
    vector of signs (-1)^(n - |S|).
    """
    codes = np.arange(lo, hi, dtype=np.uint64)
    bits = (codes[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)
    bits = bits.astype(float)
    sizes = bits.sum(axis=1)
    signs = np.where((n - sizes.astype(np.int64)) % 2 == 0, 1.0, -1.0)
    return bits, signs


def permanent_scaled(w: np.ndarray) -> float:
    """Permanent of a positive square matrix by inclusion-exclusion."""
    n = w.shape[0]
    if n == 1:
        return float(w[0, 0])
    wt = np.ascontiguousarray(w.T)
    block_sums = []
    for lo in range(1, 1 << n, 1 << _BLOCK_BITS):
        hi = min(lo + (1 << _BLOCK_BITS), 1 << n)
        bits, signs = _subset_block(lo, hi, n)
        rows = bits @ wt  # (block, n): row sums of w restricted to each subset
        block_sums.append(float(np.sum(signs * np.prod(rows, axis=1))))
    return math.fsum(block_sums)


def value_and_numerator(w: np.ndarray, etaw: np.ndarray) -> tuple[float, float]:
    """Permanent of ``w`` and the linear statistic numerator in one sweep.

    The numerator is sum_ij etaw[i, j] * per(minor of w at (i, j)), obtained
    without forming minors: within each subset S the ratio
    (sum_{j in S} etaw[i, j]) / (sum_{j in S} w[i, j]) replaces one factor of
    the product, which is valid because every row sum is positive.
    """
    n = w.shape[0]
    if n == 1:
        return float(w[0, 0]), float(etaw[0, 0])
    wt = np.ascontiguousarray(w.T)
    et = np.ascontiguousarray(etaw.T)
    per_blocks = []
    num_blocks = []
    for lo in range(1, 1 << n, 1 << _BLOCK_BITS):
        hi = min(lo + (1 << _BLOCK_BITS), 1 << n)
        bits, signs = _subset_block(lo, hi, n)
        rows = bits @ wt
        prods = np.prod(rows, axis=1)
        ratios = (bits @ et) / rows
        per_blocks.append(float(np.sum(signs * prods)))
        num_blocks.append(float(np.sum(signs * prods * ratios.sum(axis=1))))
    return math.fsum(per_blocks), math.fsum(num_blocks)


def minors_matrix(w: np.ndarray) -> np.ndarray:
    """All first minors' permanents: out[i, j] = per(w with row i, col j removed)."""
    n = w.shape[0]
    out = np.empty((n, n))
    if n == 1:
        out[0, 0] = 1.0
        return out
    for i in range(n):
        reduced = np.delete(w, i, axis=0)
        for j in range(n):
            out[i, j] = permanent_scaled(np.delete(reduced, j, axis=1))
    return out
