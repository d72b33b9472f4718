"""Log-domain marginal fitting for entropic couplings on finite spaces.

The central object is the scaled kernel

    xi(x, y) = exp((a(x) + b(y) - c(x, y)) / eps)

whose job is to turn the product measure into the entropic coupling
mu(x, y) = xi(x, y) rho0(x) rho1(y) with marginals rho0 and rho1.  The
potentials (a, b) are found by alternating normalization carried out
entirely in the log domain, so large cost-to-temperature ratios do not
overflow intermediate scalings.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import MarginalMismatch, NonConvergence, OverflowInKernel
from .measures import DiscreteMeasure


@dataclass(frozen=True)
class GibbsKernel:
    """Solved entropic coupling between two discrete measures.

    Attributes
    ----------
    xi : ndarray, shape (m0, m1)
        Scaled kernel; satisfies ``xi @ rho1 = 1`` and ``xi.T @ rho0 = 1``
        up to the solve tolerance, with all entries strictly positive.
    a, b : ndarray
        Potentials in cost units, gauge-fixed so that ``a @ rho0 == 0``.
    eps : float
        Temperature.
    rho0, rho1 : ndarray
        The marginal weight vectors the kernel was solved against.
    mu : ndarray, shape (m0, m1)
        Coupling weights ``xi * outer(rho0, rho1)``.
    """

    xi: np.ndarray
    a: np.ndarray
    b: np.ndarray
    eps: float
    rho0: np.ndarray
    rho1: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True)
class SinkhornReport:
    iterations: int
    residual: float
    converged: bool


def _logsumexp_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of a 2-d array, stable under large negatives."""
    peak = np.max(m, axis=1)
    return peak + np.log(np.sum(np.exp(m - peak[:, None]), axis=1))


def _marginal_residual(log_xi: np.ndarray, w0: np.ndarray, w1: np.ndarray) -> float:
    xi = np.exp(log_xi)
    row = np.max(np.abs(xi @ w1 - 1.0))
    col = np.max(np.abs(xi.T @ w0 - 1.0))
    return float(max(row, col))


def _fit_potentials(
    log_k: np.ndarray,
    w0: np.ndarray,
    w1: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray, int, float]:
    """Alternating log-domain normalization against arbitrary positive weights.

    Returns scaled potentials (u, v) with ``exp(log_k + u + v)`` fitting both
    marginals to within ``tol``, plus the iteration count and final residual.
    Raises NonConvergence when the budget runs out.
    """
    log_w0 = np.log(w0)
    log_w1 = np.log(w1)
    u = np.zeros(log_k.shape[0])
    v = np.zeros(log_k.shape[1])
    iterations = 0
    residual = math.inf
    while iterations < max_iter:
        u = -_logsumexp_rows(log_k + v[None, :] + log_w1[None, :])
        v = -_logsumexp_rows(log_k.T + u[None, :] + log_w0[None, :])
        iterations += 1
        residual = _marginal_residual(log_k + u[:, None] + v[None, :], w0, w1)
        if residual <= tol:
            return u, v, iterations, residual
    raise NonConvergence(
        f"residual {residual:.3e} > tol {tol:.3e} after {max_iter} iterations"
    )


def solve_bridge(
    rho0: DiscreteMeasure,
    rho1: DiscreteMeasure,
    cost: np.ndarray,
    eps: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[GibbsKernel, SinkhornReport]:
    """Solve for the scaled kernel with prescribed marginals.

    Parameters
    ----------
    rho0, rho1 : DiscreteMeasure
        Marginals.
    cost : ndarray, shape (rho0.size, rho1.size)
        Nonnegative finite ground cost on the product of the supports.
    eps : float
        Temperature, strictly positive.
    tol : float
        Worst marginal residual accepted, in (0, 1e-6].
    max_iter : int
        Iteration budget.

    Returns
    -------
    (GibbsKernel, SinkhornReport)

    Raises
    ------
    NonConvergence
        If the residual is still above ``tol`` after ``max_iter`` sweeps.
    OverflowInKernel
        If a kernel entry is not representable as a positive float at this
        temperature (overflow or underflow to zero).
    """
    c = np.asarray(cost, dtype=float)
    if c.shape != (rho0.size, rho1.size):
        raise ValueError(f"cost shape {c.shape} does not match supports")
    if not np.all(np.isfinite(c)) or np.any(c < 0.0):
        raise ValueError("cost must be finite and >= 0")
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError("eps must be a positive finite float")
    if not (0.0 < tol <= 1e-6):
        raise ValueError("tol must lie in (0, 1e-6]")

    w0 = rho0.weights
    w1 = rho1.weights
    log_k = -c / eps
    u, v, iterations, residual = _fit_potentials(log_k, w0, w1, tol, max_iter)

    a = eps * u
    b = eps * v
    shift = float(a @ w0)  # gauge: potentials are only unique up to a constant
    a = a - shift
    b = b + shift

    log_xi = (-c + a[:, None] + b[None, :]) / eps
    xi = np.exp(log_xi)
    if not np.all(np.isfinite(xi)) or np.any(xi <= 0.0):
        raise OverflowInKernel(
            "kernel entries left the positive float range; "
            "increase eps or rescale the cost"
        )
    mu = xi * np.outer(w0, w1)
    for arr in (xi, a, b, mu):
        arr.setflags(write=False)
    kernel = GibbsKernel(xi=xi, a=a, b=b, eps=eps, rho0=w0, rho1=w1, mu=mu)
    return kernel, SinkhornReport(iterations=iterations, residual=residual, converged=True)


def markov_kernel(cost: np.ndarray, rho1: DiscreteMeasure, eps: float) -> np.ndarray:
    """Transition matrix of the one-step Gibbs move given the source point.

    Row x holds the conditional law p(y | x) proportional to
    ``exp(-c(x, y) / eps) * rho1(y)``, normalized in the log domain.
    """
    c = np.asarray(cost, dtype=float)
    if c.shape[1] != rho1.size:
        raise ValueError("cost columns do not match the target support")
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError("eps must be a positive finite float")
    logits = -c / eps + np.log(rho1.weights)[None, :]
    return np.exp(logits - _logsumexp_rows(logits)[:, None])


def entropic_objective(
    coupling: np.ndarray,
    cost: np.ndarray,
    eps: float,
    rho0: DiscreteMeasure,
    rho1: DiscreteMeasure,
    marginal_tol: float = 1e-8,
) -> float:
    """Transport cost plus eps times relative entropy against the product.

    The coupling must already have the right marginals; this is a scoring
    function for certified couplings, not a projection.  Zero entries
    contribute zero to the entropy term.

    Raises
    ------
    MarginalMismatch
        If either marginal of ``coupling`` deviates from the target by more
        than ``marginal_tol`` in sup norm, or an entry is negative.
    """
    nu = np.asarray(coupling, dtype=float)
    if nu.shape != (rho0.size, rho1.size):
        raise ValueError(f"coupling shape {nu.shape} does not match supports")
    if np.any(nu < 0.0) or not np.all(np.isfinite(nu)):
        raise MarginalMismatch("coupling entries must be finite and >= 0")
    row_err = np.max(np.abs(nu.sum(axis=1) - rho0.weights))
    col_err = np.max(np.abs(nu.sum(axis=0) - rho1.weights))
    if max(row_err, col_err) > marginal_tol:
        raise MarginalMismatch(
            f"marginal residual {max(row_err, col_err):.3e} > {marginal_tol:.3e}"
        )
    transport = float(np.sum(nu * np.asarray(cost, dtype=float)))
    ref = np.outer(rho0.weights, rho1.weights)
    pos = nu > 0.0
    entropy = float(np.sum(nu[pos] * np.log(nu[pos] / ref[pos])))
    return transport + eps * entropy
