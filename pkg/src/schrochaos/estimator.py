"""Exact evaluation of the entropic transport statistic on a sample.

Given sample points, a cost matrix ``C`` on the sample, and a temperature
``eps``, the Gibbs law on permutations weighs sigma proportionally to
``exp(-sum_i C[i, sigma_i] / eps)``.  The statistic is the Gibbs average of
the empirical transport integral ``(1/N) sum_i eta[i, sigma_i]``, and the
induced pair coupling collects the same average matchwise.

Two routes compute it exactly: direct enumeration of the N! permutations
(reference, small N) and matrix permanents via inclusion-exclusion (up to
N = 16).  Both are invariant under row and column rescalings of the weight
matrix, which is what makes a row-scaled kernel and shifted potentials
safe to use.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import backend
from .errors import (
    DegeneratePermanent,
    NotADistribution,
    Overflow,
    OverflowInKernel,
    TooLargeForEnumeration,
)
from .measures import SampleBatch
from .sinkhorn import GibbsKernel, _fit_potentials

_BRUTE_CAP = 8
_QSTAR_CAP = 10
_OBJECTIVE_CAP = 6
_PERMANENT_ROUTE_CAP = 16
_PERMANENT_CAP = 20


@dataclass(frozen=True)
class WeightMatrix:
    """Row-scaled Gibbs weights.

    ``w`` has every row maximum equal to one and all entries positive;
    ``log_scale`` is the log of the removed factor, so the true weight
    matrix is ``w`` times ``exp(log_scale)`` spread over the rows.  All
    permanent-route ratios are invariant under the scaling, so only
    normalizer-type outputs consume ``log_scale``.
    """

    w: np.ndarray
    log_scale: float


@dataclass(frozen=True)
class BridgeEstimate:
    """Statistic value, pair coupling, Gibbs normalizer, and route used.

    ``l_n`` is per(W) / N! for the weight matrix W the estimate used.  When
    W is the solved bridge kernel on the sample this equals the likelihood
    ratio of the bridge sample law against the product law.
    """

    t_n: float
    coupling: np.ndarray
    l_n: float
    method: str


def _check_square(name: str, m: np.ndarray, n: int) -> None:
    if m.shape != (n, n):
        raise ValueError(f"{name} must be {n} x {n}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")


def _log_weights(
    cost: np.ndarray, eps: float, potentials: Optional[tuple] = None
) -> np.ndarray:
    n = cost.shape[0]
    _check_square("cost", cost, n)
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError("eps must be a positive finite float")
    logw = -cost / eps
    if potentials is not None:
        a = np.asarray(potentials[0], dtype=float)
        b = np.asarray(potentials[1], dtype=float)
        if a.shape != (n,) or b.shape != (n,):
            raise ValueError("potentials must be two length-n vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("potentials must be finite")
        logw = logw + (a[:, None] + b[None, :]) / eps
    return logw


def weight_matrix(
    cost: np.ndarray, eps: float, potentials: Optional[tuple] = None
) -> WeightMatrix:
    """Row-scaled Gibbs weight matrix for a sample cost matrix."""
    logw = _log_weights(cost, eps, potentials)
    row_peak = logw.max(axis=1)
    w = np.exp(logw - row_peak[:, None])
    if np.any(w == 0.0):
        raise OverflowInKernel(
            "weight dynamic range exceeds float64 within a row; increase eps"
        )
    return WeightMatrix(w=w, log_scale=float(row_peak.sum()))


@lru_cache(maxsize=None)
def _perm_table(n: int) -> np.ndarray:
    """All permutations of range(n) in lexicographic order, one per row."""
    table = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    table.setflags(write=False)
    return table


def _logsumexp(v: np.ndarray) -> float:
    peak = float(np.max(v))
    return peak + math.log(float(np.sum(np.exp(v - peak))))


def q_star(cost: np.ndarray, eps: float, sigma: Sequence[int]) -> float:
    """Gibbs probability of one permutation, by full enumeration (N <= 10)."""
    n = cost.shape[0]
    if n > _QSTAR_CAP:
        raise TooLargeForEnumeration(f"N = {n} exceeds the enumeration cap {_QSTAR_CAP}")
    sig = np.asarray(sigma, dtype=np.intp)
    if sig.shape != (n,) or sorted(sig.tolist()) != list(range(n)):
        raise ValueError("sigma must be a permutation of range(N)")
    logw = _log_weights(cost, eps)
    perms = _perm_table(n)
    logvals = logw[np.arange(n)[None, :], perms].sum(axis=1)
    own = float(logw[np.arange(n), sig].sum())
    return math.exp(own - _logsumexp(logvals))


def t_n_brute(
    eta: np.ndarray,
    cost: np.ndarray,
    eps: float,
    potentials: Optional[tuple] = None,
) -> BridgeEstimate:
    """Reference route: enumerate all permutations in the log domain (N <= 8).

    Parameters
    ----------
    eta : ndarray, shape (n, n)
        Integrand evaluated on the sample pairs.
    cost : ndarray, shape (n, n)
        Sample cost matrix.
    eps : float
        Temperature.
    potentials : optional (a, b) pair
        Per-point shifts in cost units; they change the weight matrix but
        not the statistic or the coupling, only the normalizer ``l_n``.
    """
    n = cost.shape[0]
    if n > _BRUTE_CAP:
        raise TooLargeForEnumeration(f"N = {n} exceeds the brute-force cap {_BRUTE_CAP}")
    eta = np.asarray(eta, dtype=float)
    _check_square("eta", eta, n)
    logw = _log_weights(cost, eps, potentials)
    perms = _perm_table(n)
    rows = np.arange(n)[None, :]
    logvals = logw[rows, perms].sum(axis=1)
    log_z = _logsumexp(logvals)
    probs = np.exp(logvals - log_z)
    means = eta[rows, perms].mean(axis=1)
    t_n = float(probs @ means)
    coupling = np.zeros((n, n))
    np.add.at(coupling, (np.broadcast_to(rows, perms.shape), perms), probs[:, None] / n)
    l_n = math.exp(log_z - math.lgamma(n + 1))
    return BridgeEstimate(t_n=t_n, coupling=coupling, l_n=l_n, method="brute")


def permanent(w: np.ndarray) -> tuple[float, float]:
    """Permanent of a positive matrix as (value, log_scale).

    The permanent equals ``value * exp(log_scale)``; the split keeps the
    result representable when the raw entries have a wide dynamic range.

    Raises
    ------
    TooLargeForEnumeration
        If the matrix is larger than 20 x 20.
    DegeneratePermanent
        If an entry is not strictly positive, or the signed accumulation
        lost the value to cancellation or underflow.
    Overflow
        If the accumulation left the finite float range.
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    _check_square("weight matrix", w, n)
    if n > _PERMANENT_CAP:
        raise TooLargeForEnumeration(f"n = {n} exceeds the permanent cap {_PERMANENT_CAP}")
    if np.any(w <= 0.0):
        raise DegeneratePermanent("weight entries must be strictly positive")
    row_peak = w.max(axis=1)
    value = backend.permanent_scaled(w / row_peak[:, None])
    if not math.isfinite(value):
        raise Overflow("permanent accumulation is not finite")
    if value <= 0.0:
        raise DegeneratePermanent("permanent lost to cancellation or underflow")
    return value, float(np.sum(np.log(row_peak)))


def t_n_permanent(
    eta: np.ndarray,
    cost: np.ndarray,
    eps: float,
    potentials: Optional[tuple] = None,
) -> BridgeEstimate:
    """Permanent route: coupling from all first minors (N <= 16).

    Produces the full pair coupling ``M[i, j] = w_ij per(minor_ij) / (N per(W))``
    and the statistic as ``sum eta * M``.
    """
    n = cost.shape[0]
    if n > _PERMANENT_ROUTE_CAP:
        raise TooLargeForEnumeration(
            f"N = {n} exceeds the permanent-route cap {_PERMANENT_ROUTE_CAP}"
        )
    eta = np.asarray(eta, dtype=float)
    _check_square("eta", eta, n)
    wm = weight_matrix(cost, eps, potentials)
    per = backend.permanent_scaled(wm.w)
    if not math.isfinite(per):
        raise Overflow("permanent accumulation is not finite")
    if per <= 0.0:
        raise DegeneratePermanent("permanent lost to cancellation or underflow")
    minors = backend.minors_matrix(wm.w)
    coupling = wm.w * minors / (n * per)
    if not np.all(np.isfinite(coupling)):
        raise Overflow("minor accumulation is not finite")
    t_n = float(np.sum(eta * coupling))
    l_n = math.exp(math.log(per) + wm.log_scale - math.lgamma(n + 1))
    return BridgeEstimate(t_n=t_n, coupling=coupling, l_n=l_n, method="permanent")


def t_n_value(
    eta: np.ndarray,
    cost: np.ndarray,
    eps: float,
    potentials: Optional[tuple] = None,
) -> float:
    """Statistic only, in one inclusion-exclusion sweep (N <= 16).

    Same value as the permanent route without materializing minors: within
    each column subset the minor sum collapses to a row-sum ratio, giving
    ``sum_ij eta_ij w_ij per(minor_ij)`` alongside ``per(W)`` in O(n 2^n).
    """
    n = cost.shape[0]
    if n > _PERMANENT_ROUTE_CAP:
        raise TooLargeForEnumeration(
            f"N = {n} exceeds the permanent-route cap {_PERMANENT_ROUTE_CAP}"
        )
    eta = np.asarray(eta, dtype=float)
    _check_square("eta", eta, n)
    wm = weight_matrix(cost, eps, potentials)
    return t_n_from_weights(wm.w, eta)


def t_n_from_weights(w: np.ndarray, eta: np.ndarray) -> float:
    """Sweep route on an explicit positive weight matrix (no validation)."""
    n = w.shape[0]
    peak = w.max(axis=1)
    per, num = backend.value_and_numerator(w / peak[:, None], eta * (w / peak[:, None]))
    if not (math.isfinite(per) and math.isfinite(num)):
        raise Overflow("sweep accumulation is not finite")
    if per <= 0.0:
        raise DegeneratePermanent("permanent lost to cancellation or underflow")
    return num / (n * per)


def likelihood_ratio(batch: SampleBatch, kernel: GibbsKernel) -> float:
    """Density of the N-fold bridge sample law against the product law.

    Equals per(xi restricted to the sampled points) / N!, capped at N = 16.
    """
    n = batch.n
    if n > _PERMANENT_ROUTE_CAP:
        raise TooLargeForEnumeration(
            f"N = {n} exceeds the permanent-route cap {_PERMANENT_ROUTE_CAP}"
        )
    w = kernel.xi[np.ix_(batch.x_idx, batch.y_idx)]
    value, log_scale = permanent(w)
    return math.exp(math.log(value) + log_scale - math.lgamma(n + 1))


def gibbs_objective_check(q: np.ndarray, cost: np.ndarray, eps: float) -> float:
    """Regularized matching objective of a permutation distribution (N <= 6).

    ``q`` lists probabilities over permutations in the lexicographic order
    of ``itertools.permutations(range(N))``.  Returns
    ``<M_q, C> + (eps / N) * sum q log q`` with 0 log 0 = 0, where ``M_q``
    is the pair coupling induced by ``q``.  The Gibbs law is its minimizer
    over all distributions; tests probe that directly.
    """
    n = cost.shape[0]
    if n > _OBJECTIVE_CAP:
        raise TooLargeForEnumeration(f"N = {n} exceeds the objective cap {_OBJECTIVE_CAP}")
    _check_square("cost", cost, n)
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError("eps must be a positive finite float")
    q = np.asarray(q, dtype=float)
    n_fact = math.factorial(n)
    if q.shape != (n_fact,):
        raise NotADistribution(f"q must have length {n_fact}")
    if np.any(q < 0.0) or not np.all(np.isfinite(q)):
        raise NotADistribution("q entries must be finite and >= 0")
    if abs(math.fsum(q.tolist()) - 1.0) > 1e-9:
        raise NotADistribution("q must sum to one")
    perms = _perm_table(n)
    rows = np.arange(n)[None, :]
    transport = float(q @ cost[rows, perms].mean(axis=1))
    pos = q > 0.0
    entropy = float(np.sum(q[pos] * np.log(q[pos])))
    return transport + (eps / n) * entropy


def empirical_potentials(
    cost: np.ndarray, eps: float, tol: float = 1e-12, max_iter: int = 100_000
) -> tuple[np.ndarray, np.ndarray]:
    """Potentials fitting uniform marginals on the sample (in cost units).

    Runs the same log-domain alternating normalization as the population
    solve, but against the empirical uniform weights 1/N on each side, which
    tolerates repeated sample points.  Gauge: the row potentials average to
    zero.
    """
    n = cost.shape[0]
    logw = _log_weights(cost, eps)
    uniform = np.full(n, 1.0 / n)
    u, v, _, _ = _fit_potentials(logw, uniform, uniform, tol, max_iter)
    a = eps * u
    b = eps * v
    shift = float(a.mean())
    return a - shift, b + shift
