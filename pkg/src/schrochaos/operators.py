"""Markov smoothing operators of a solved coupling and their spectral calculus.

A solved kernel ``xi`` with marginals (rho0, rho1) induces two Markov
operators: ``A`` maps functions of the source point to functions of the
target point by conditional expectation under the coupling, and ``A*`` is
its adjoint in the weighted L2 geometry.  Their singular system diagonalizes
every inverse this package needs, so it is computed once, on the
symmetrized matrix ``sqrt(rho0) xi sqrt(rho1)``, and carried around in a
:class:`BridgeOperators` bundle.

Conventions.  Basis functions are normalized in the weighted inner products
``<u, v> = sum u v rho`` and each one is sign-fixed so its largest-magnitude
entry is positive (lowest index wins ties); paired target-side vectors
follow the source-side flip so that ``A alpha_k = s_k beta_k`` keeps holding.
Singular values come out of the SVD in nonincreasing order, with the leading
pair equal to the constant function one on both sides.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    MarginalMismatch,
    NotDegenerate,
    NotMeanZero,
    SpectralGapViolation,
)
from .sinkhorn import GibbsKernel

_MEAN_TOL = 1e-10
_DEGENERACY_TOL = 1e-9
_GAP_FLOOR = 1e-10


@dataclass(frozen=True)
class BridgeOperators:
    """Spectral bundle of the coupling's one-step operators.

    Attributes
    ----------
    xi : ndarray, shape (m0, m1)
        Scaled kernel.
    rho0, rho1 : ndarray
        Marginal weight vectors.
    alpha : ndarray, shape (m0, m0)
        Complete orthonormal basis of source functions, columns indexed by
        level; level 0 is the constant function one.
    beta : ndarray, shape (m1, m1)
        Same on the target side.
    s : ndarray, shape (min(m0, m1),)
        Singular values, nonincreasing, s[0] == 1.  Levels past the end act
        as zero.
    gap : float
        One minus the second singular value (1.0 when there is no level 1).
    """

    xi: np.ndarray
    rho0: np.ndarray
    rho1: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    s: np.ndarray
    gap: float

    @property
    def s_row(self) -> np.ndarray:
        """Singular values padded with zeros to one per source level."""
        out = np.zeros(self.alpha.shape[1])
        out[: self.s.size] = self.s
        return out

    @property
    def s_col(self) -> np.ndarray:
        out = np.zeros(self.beta.shape[1])
        out[: self.s.size] = self.s
        return out


def _fix_signs(alpha: np.ndarray, beta: np.ndarray, paired: int) -> None:
    for k in range(alpha.shape[1]):
        pivot = int(np.argmax(np.abs(alpha[:, k])))
        if alpha[pivot, k] < 0.0:
            alpha[:, k] *= -1.0
            if k < paired:
                beta[:, k] *= -1.0
    for k in range(paired, beta.shape[1]):
        pivot = int(np.argmax(np.abs(beta[:, k])))
        if beta[pivot, k] < 0.0:
            beta[:, k] *= -1.0


def build_operators(kernel: GibbsKernel, marginal_tol: float = 1e-10) -> BridgeOperators:
    """Singular system of the coupling's Markov operators.

    Raises
    ------
    MarginalMismatch
        If the kernel's marginal residual exceeds ``marginal_tol``.
    SpectralGapViolation
        If the second singular value is within 1e-10 of one, which would
        make every resolvent in this module numerically meaningless.
    """
    xi, w0, w1 = kernel.xi, kernel.rho0, kernel.rho1
    row = np.max(np.abs(xi @ w1 - 1.0))
    col = np.max(np.abs(xi.T @ w0 - 1.0))
    if max(row, col) > marginal_tol:
        raise MarginalMismatch(
            f"kernel marginal residual {max(row, col):.3e} > {marginal_tol:.3e}"
        )
    sqrt0 = np.sqrt(w0)
    sqrt1 = np.sqrt(w1)
    sym = sqrt0[:, None] * xi * sqrt1[None, :]
    u_mat, s, vt = np.linalg.svd(sym, full_matrices=True)
    alpha = u_mat / sqrt0[:, None]
    beta = vt.T / sqrt1[:, None]
    _fix_signs(alpha, beta, paired=s.size)
    gap = 1.0 - float(s[1]) if s.size >= 2 else 1.0
    if gap <= _GAP_FLOOR:
        raise SpectralGapViolation(
            f"second singular value {s[1]:.15f} is too close to one"
        )
    for arr in (alpha, beta, s):
        arr.setflags(write=False)
    return BridgeOperators(
        xi=xi, rho0=w0, rho1=w1, alpha=alpha, beta=beta, s=s, gap=gap
    )


def apply_A(ops: BridgeOperators, f: np.ndarray) -> np.ndarray:
    """Conditional expectation of a source function given the target point."""
    return ops.xi.T @ (ops.rho0 * f)


def apply_A_star(ops: BridgeOperators, g: np.ndarray) -> np.ndarray:
    """Conditional expectation of a target function given the source point."""
    return ops.xi @ (ops.rho1 * g)


def cond_mean_x(ops: BridgeOperators, h: np.ndarray) -> np.ndarray:
    """E[h(X, Y) | X = x] under the coupling, for a grid function h."""
    return (h * ops.xi) @ ops.rho1


def cond_mean_y(ops: BridgeOperators, h: np.ndarray) -> np.ndarray:
    """E[h(X, Y) | Y = y] under the coupling."""
    return (h * ops.xi).T @ ops.rho0


def coefficients(ops: BridgeOperators, h: np.ndarray) -> np.ndarray:
    """Expand a grid function over the alpha (x) beta tensor basis."""
    weighted = ops.rho0[:, None] * h * ops.rho1[None, :]
    return ops.alpha.T @ weighted @ ops.beta


def reconstruct(ops: BridgeOperators, coef: np.ndarray) -> np.ndarray:
    """Inverse of :func:`coefficients`."""
    return ops.alpha @ coef @ ops.beta.T


def apply_B(ops: BridgeOperators, h: np.ndarray) -> np.ndarray:
    """Swap-and-smooth operator on grid functions.

    Sends h to the function (x, y) -> E[h(X', Y') ...] where X' is drawn
    from the coupling conditioned on y and Y' conditioned on x; on the
    tensor basis it maps alpha_k (x) beta_l to s_k s_l alpha_l (x) beta_k.
    """
    p = ops.xi * ops.rho1[None, :]
    q = ops.rho0[:, None] * ops.xi
    return p @ h.T @ q


def _require_gap(ops: BridgeOperators) -> None:
    if ops.gap <= _GAP_FLOOR:
        raise SpectralGapViolation(f"spectral gap {ops.gap:.3e} is too small")


def solve_resolvent_x(ops: BridgeOperators, f: np.ndarray) -> np.ndarray:
    """Solve (I - A* A) u = f for mean-zero f on the source space.

    Raises NotMeanZero when ``<f, 1>`` under rho0 exceeds 1e-10 in absolute
    value, since the operator is singular on constants.
    """
    _require_gap(ops)
    mean = float(f @ ops.rho0)
    if abs(mean) > _MEAN_TOL:
        raise NotMeanZero(f"<f, 1> = {mean:.3e} is not zero")
    coef = ops.alpha.T @ (ops.rho0 * f)
    coef[0] = 0.0  # constants are excluded; the coefficient is residual noise
    coef[1:] = coef[1:] / (1.0 - ops.s_row[1:] ** 2)
    return ops.alpha @ coef


def solve_resolvent_y(ops: BridgeOperators, g: np.ndarray) -> np.ndarray:
    """Solve (I - A A*) u = g for mean-zero g on the target space."""
    _require_gap(ops)
    mean = float(g @ ops.rho1)
    if abs(mean) > _MEAN_TOL:
        raise NotMeanZero(f"<g, 1> = {mean:.3e} is not zero")
    coef = ops.beta.T @ (ops.rho1 * g)
    coef[0] = 0.0
    coef[1:] = coef[1:] / (1.0 - ops.s_col[1:] ** 2)
    return ops.beta @ coef


def solve_I_plus_B(ops: BridgeOperators, h: np.ndarray) -> np.ndarray:
    """Solve (I + B) u = h for a grid function with zero grand mean.

    In coefficients the equation couples levels pairwise, (k, l) with
    (l, k), so each pair is a 2 x 2 solve:

        u_kl = (t_kl - s_k s_l t_lk) / (1 - (s_k s_l)^2),  k != l
        u_kk = t_kk / (1 + s_k^2)

    The diagonal rule also covers (0, 0), where the off-diagonal divisor
    would vanish.
    """
    _require_gap(ops)
    mean = float(np.sum(ops.rho0[:, None] * h * ops.rho1[None, :]))
    if abs(mean) > _MEAN_TOL:
        raise NotMeanZero(f"grand mean {mean:.3e} is not zero")
    t = coefficients(ops, h)
    coef = t.copy()
    k = ops.s.size  # levels with a partner on both sides
    tb = t[:k, :k]
    ss = np.outer(ops.s, ops.s)
    denom = 1.0 - ss**2
    np.fill_diagonal(denom, 1.0)
    block = (tb - ss * tb.T) / denom
    np.fill_diagonal(block, np.diag(tb) / (1.0 + ops.s**2))
    coef[:k, :k] = block
    return reconstruct(ops, coef)


@dataclass(frozen=True)
class DegeneracyReport:
    """Worst conditional means of a grid function under a joint weighting."""

    residual_x: float
    residual_y: float

    def max_residual(self) -> float:
        return max(self.residual_x, self.residual_y)


def check_degenerate(weights: np.ndarray, h: np.ndarray) -> DegeneracyReport:
    """Conditional mean residuals of h under an explicit joint weighting.

    ``residual_x`` is the worst absolute mean of h over x given y, and
    ``residual_y`` the mirror.  A doubly degenerate function has both at
    zero.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != h.shape:
        raise ValueError("weights and h must have the same shape")
    if np.any(w < 0.0):
        raise ValueError("weights must be >= 0")
    col_mass = w.sum(axis=0)
    row_mass = w.sum(axis=1)
    if np.any(col_mass <= 0.0) or np.any(row_mass <= 0.0):
        raise ValueError("every row and column needs positive mass")
    residual_x = float(np.max(np.abs((h * w).sum(axis=0) / col_mass)))
    residual_y = float(np.max(np.abs((h * w).sum(axis=1) / row_mass)))
    return DegeneracyReport(residual_x=residual_x, residual_y=residual_y)


def solve_C(ops: BridgeOperators, h: np.ndarray) -> np.ndarray:
    """Solve ((I - A* A) (x) (I - A A*)) u = h for doubly degenerate h.

    The input must have vanishing conditional means under the product of the
    marginals; level-zero components are then residual noise and are
    dropped, and every other coefficient is divided by
    ``(1 - s_k^2)(1 - s_l^2)``.

    Raises
    ------
    NotDegenerate
        If a conditional mean residual under rho0 (x) rho1 exceeds 1e-9.
    """
    _require_gap(ops)
    product = np.outer(ops.rho0, ops.rho1)
    report = check_degenerate(product, h)
    if report.max_residual() > _DEGENERACY_TOL:
        raise NotDegenerate(
            f"conditional mean residual {report.max_residual():.3e} > {_DEGENERACY_TOL:.3e}"
        )
    coef = coefficients(ops, h)
    coef[0, :] = 0.0
    coef[:, 0] = 0.0
    scale = np.outer(1.0 - ops.s_row[1:] ** 2, 1.0 - ops.s_col[1:] ** 2)
    coef[1:, 1:] = coef[1:, 1:] / scale
    return reconstruct(ops, coef)
