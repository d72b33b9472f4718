"""Discrete probability measures, cost matrices, and seeded sampling.

Atoms live in ``R^d`` and are stored as the rows of an ``(n, d)`` float
array.  Weights are strictly positive and are renormalized to sum to one
exactly once, at construction time, using compensated summation.  All
random sampling goes through counter-based Philox streams keyed by
``(master_seed, stream_index)`` so that results are reproducible and
independent of scheduling.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DuplicateAtom,
    EmptySupport,
    NegativeCost,
    NonpositiveWeight,
    NotADistribution,
)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class DiscreteMeasure:
    """A finitely supported probability measure.

    Attributes
    ----------
    atoms : ndarray, shape (n, d)
        Support points, one per row, pairwise distinct.
    weights : ndarray, shape (n,)
        Strictly positive weights summing to one.
    """

    atoms: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


def make_discrete_measure(atoms: Sequence, weights: Sequence[float]) -> DiscreteMeasure:
    """Validate and normalize a finitely supported measure.

    Parameters
    ----------
    atoms : sequence
        Support points.  Scalars are promoted to one-dimensional points.
    weights : sequence of float
        Positive masses, one per atom.  They are normalized to sum to one;
        the input does not need to be normalized already.

    Returns
    -------
    DiscreteMeasure

    Raises
    ------
    EmptySupport
        If no atoms are given.
    DuplicateAtom
        If two atoms have identical coordinates.
    NonpositiveWeight
        If any weight is zero, negative, or not finite.
    """
    pts = np.asarray(atoms, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise EmptySupport("a discrete measure needs at least one atom")
    w = np.asarray(weights, dtype=float)
    if w.shape != (pts.shape[0],):
        raise ValueError(
            f"got {pts.shape[0]} atoms but {w.shape} weights"
        )
    if not np.all(np.isfinite(pts)):
        raise ValueError("atom coordinates must be finite")
    if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
        raise NonpositiveWeight("all weights must be finite and > 0")
    seen = set()
    for row in pts:
        key = tuple(row.tolist())
        if key in seen:
            raise DuplicateAtom(f"atom {key} appears more than once")
        seen.add(key)
    total = math.fsum(w.tolist())
    w = w / total
    pts.setflags(write=False)
    w.setflags(write=False)
    return DiscreteMeasure(atoms=pts, weights=w)


@dataclass(frozen=True)
class CostSpec:
    """Declarative description of a ground cost.

    ``kind`` is one of ``"squared-euclidean"``, ``"euclidean-power"`` or
    ``"explicit-matrix"``.  ``power`` is the exponent for the power kind
    (and doubles as growth metadata for the others).  ``entries`` holds the
    matrix for the explicit kind, indexed by (source atom, target atom).
    """

    kind: str
    power: float = 2.0
    entries: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.kind not in ("squared-euclidean", "euclidean-power", "explicit-matrix"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "euclidean-power" and self.power < 1.0:
            raise ValueError("power costs need an exponent >= 1")
        if self.kind == "explicit-matrix" and self.entries is None:
            raise ValueError("explicit-matrix costs need entries")


def cost_matrix(spec: CostSpec, rho0: DiscreteMeasure, rho1: DiscreteMeasure) -> np.ndarray:
    """Evaluate the ground cost on the product of two supports.

    Parameters
    ----------
    spec : CostSpec
    rho0, rho1 : DiscreteMeasure
        Source and target measures; the result is indexed by their atoms.

    Returns
    -------
    ndarray, shape (rho0.size, rho1.size)
        Nonnegative finite cost values.

    Raises
    ------
    NegativeCost
        If an explicit matrix has a negative entry.
    ValueError
        On dimension mismatch, wrong explicit shape, or non-finite entries.
    """
    if spec.kind == "explicit-matrix":
        c = np.asarray(spec.entries, dtype=float)
        if c.shape != (rho0.size, rho1.size):
            raise ValueError(
                f"explicit cost has shape {c.shape}, expected {(rho0.size, rho1.size)}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("cost entries must be finite")
        if np.any(c < 0.0):
            raise NegativeCost("cost entries must be >= 0")
        return c.copy()
    if rho0.dim != rho1.dim:
        raise ValueError("source and target atoms live in different dimensions")
    diff = rho0.atoms[:, None, :] - rho1.atoms[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if spec.kind == "squared-euclidean":
        return sq
    return np.power(np.sqrt(sq), spec.power)


def stream(master_seed: int, stream_index: int = 0) -> np.random.Generator:
    """Return the Philox generator for one (seed, stream) pair.

    Distinct ``stream_index`` values give statistically independent streams
    for the same master seed, which is how replicates are parallelized
    without losing byte-level reproducibility.
    """
    key = np.array([master_seed & _MASK64, stream_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample(measure: DiscreteMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` atom indices i.i.d. from a measure by inverse CDF.

    The CDF is taken in atom insertion order, so a given generator state
    always yields the same indices.
    """
    if n < 1:
        raise ValueError("need at least one draw")
    cdf = np.cumsum(measure.weights)
    cdf[-1] = 1.0  # guard against accumulated rounding in the last bin
    u = rng.random(n)
    return np.searchsorted(cdf, u, side="right").astype(np.intp)


@dataclass(frozen=True)
class SampleBatch:
    """One replicate worth of paired draws.

    ``x_idx`` and ``y_idx`` index the source and target atoms.  ``source``
    records which law produced the pairs: ``"product"`` for independent
    coordinates or ``"bridge"`` for draws from a joint coupling.  ``seed``
    keeps the master seed used, when known, for audit output.
    """

    n: int
    x_idx: np.ndarray
    y_idx: np.ndarray
    source: str
    seed: Optional[int] = None


def sample_product(
    rho0: DiscreteMeasure,
    rho1: DiscreteMeasure,
    n: int,
    rng: np.random.Generator,
    seed: Optional[int] = None,
) -> SampleBatch:
    """Draw n independent pairs from the product of two measures.

    The x coordinates consume the stream before the y coordinates, which
    pins down the exact draws for a given generator state.
    """
    ix = sample(rho0, n, rng)
    iy = sample(rho1, n, rng)
    return SampleBatch(n=n, x_idx=ix, y_idx=iy, source="product", seed=seed)


def sample_bridge(
    joint: np.ndarray,
    n: int,
    rng: np.random.Generator,
    seed: Optional[int] = None,
) -> SampleBatch:
    """Draw n pairs from an explicit joint probability matrix.

    Parameters
    ----------
    joint : ndarray, shape (m0, m1)
        Nonnegative matrix summing to one; entry (i, j) is the mass on the
        pair (atom i of the source, atom j of the target).
    n : int
        Number of pairs.
    rng : numpy Generator

    Raises
    ------
    NotADistribution
        If the matrix has a negative entry or does not sum to one.
    """
    joint = np.asarray(joint, dtype=float)
    if np.any(joint < 0.0) or abs(float(joint.sum()) - 1.0) > 1e-9:
        raise NotADistribution("joint weights must be >= 0 and sum to one")
    flat = joint.reshape(-1)
    cdf = np.cumsum(flat)
    cdf[-1] = 1.0
    u = rng.random(n)
    pos = np.searchsorted(cdf, u, side="right")
    ix, iy = np.unravel_index(pos, joint.shape)
    return SampleBatch(
        n=n, x_idx=ix.astype(np.intp), y_idx=iy.astype(np.intp),
        source="bridge", seed=seed,
    )


def as_distribution(weights: Union[Sequence[float], np.ndarray], tol: float = 1e-9) -> np.ndarray:
    """Check that a vector is a probability vector and return it as float64."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise NotADistribution("need a nonempty one-dimensional weight vector")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise NotADistribution("weights must be finite and >= 0")
    if abs(math.fsum(w.tolist()) - 1.0) > tol:
        raise NotADistribution("weights must sum to one")
    return w
