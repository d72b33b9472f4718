"""Chaos decomposition of the transport statistic around its mean.

The statistic admits an expansion ``T_N = theta + L1_N + L2_N + remainder``
where ``L1_N`` averages two single-coordinate functions (the first-order
chaos), ``L2_N`` is a pair statistic built from three two-coordinate
kernels, and the remainder is of smaller order.  This module computes all
of the kernels exactly from the solved coupling, evaluates the chaos terms
on samples, and simulates the limiting law that appears when the
first-order term vanishes.

Everything here works on the population grid, so sizes are the support
sizes, not the sample size.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import (
    BatchTooSmall,
    NotDegenerateFirstOrder,
    TooLargeForEnumeration,
)
from .measures import SampleBatch, stream
from .operators import (
    BridgeOperators,
    apply_A,
    apply_A_star,
    apply_B,
    coefficients,
    cond_mean_x,
    cond_mean_y,
    solve_C,
    solve_resolvent_x,
    solve_resolvent_y,
)
from .sinkhorn import GibbsKernel

_FIRST_ORDER_TOL = 1e-10


@dataclass(frozen=True)
class FirstOrderChaos:
    """Mean and first-order kernels of the statistic.

    ``f`` and ``g`` are the single-coordinate functions whose sample
    averages drive the normal fluctuation; ``variance`` is the limit
    variance ``|f|^2 + |g|^2`` in the weighted norms.
    """

    theta: float
    mean_given_x: np.ndarray
    mean_given_y: np.ndarray
    f: np.ndarray
    g: np.ndarray
    variance: float


def first_order_kernels(
    eta: np.ndarray, kernel: GibbsKernel, ops: BridgeOperators
) -> FirstOrderChaos:
    """Mean, conditional means, and first-order chaos functions.

    Solves the coupled pair of resolvent equations

        (I - A* A) f = E[eta - theta | X] - A* E[eta - theta | Y]
        (I - A A*) g = E[eta - theta | Y] - A  E[eta - theta | X]

    whose solutions reproduce both conditional means: f + A* g and g + A f
    equal them exactly, which is the property tests pin down.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != kernel.xi.shape:
        raise ValueError(f"eta must match the grid {kernel.xi.shape}")
    theta = float(np.sum(eta * kernel.mu))
    centered = eta - theta
    k10 = cond_mean_x(ops, centered)
    k01 = cond_mean_y(ops, centered)
    f = solve_resolvent_x(ops, k10 - apply_A_star(ops, k01))
    g = solve_resolvent_y(ops, k01 - apply_A(ops, k10))
    variance = float(f**2 @ ops.rho0 + g**2 @ ops.rho1)
    return FirstOrderChaos(
        theta=theta, mean_given_x=k10, mean_given_y=k01, f=f, g=g, variance=variance
    )


def first_chaos_value(batch: SampleBatch, chaos: FirstOrderChaos) -> float:
    """Sample average (1/N) sum_i f(X_i) + g(Y_i)."""
    return float(
        (chaos.f[batch.x_idx].sum() + chaos.g[batch.y_idx].sum()) / batch.n
    )


@dataclass(frozen=True)
class SecondOrderChaos:
    """Second-order kernels and the matched-pair compensator.

    ``residual`` is the centered integrand with the first-order part
    removed; ``kernel_xx``, ``kernel_yy`` and ``kernel_xy`` are the three
    pair kernels; ``constant`` is the coupling mean of ``kernel_xy`` (the
    deterministic bias of the centered statistic at order 1/N).  The
    compensator ``diag_const + diag_f(x) + diag_g(y)`` is the projection of
    ``kernel_xy`` onto sums of single-coordinate functions under the
    coupling; it is what the matched pairs (X_i, Y_i) must subtract.
    """

    residual: np.ndarray
    kernel_xx: np.ndarray
    kernel_yy: np.ndarray
    kernel_xy: np.ndarray
    constant: float
    diag_const: float
    diag_f: np.ndarray
    diag_g: np.ndarray


def second_order_kernels(
    eta: np.ndarray,
    kernel: GibbsKernel,
    ops: BridgeOperators,
    first: Optional[FirstOrderChaos] = None,
) -> SecondOrderChaos:
    """Pair kernels of the second-order expansion.

    With h the doubly degenerate function ``residual * xi`` and u the
    solution of the tensorized resolvent equation, the kernels are

        kernel_xx(x, x') = - E[u(x, Y') | X' = x']      (smoothed in y)
        kernel_yy(y, y') = - E[u(X', y') | Y' = y]      (smoothed in x)
        kernel_xy        = u + B u

    All three are exact grid functions; no sampling is involved.
    """
    eta = np.asarray(eta, dtype=float)
    if first is None:
        first = first_order_kernels(eta, kernel, ops)
    residual = (eta - first.theta) - first.f[:, None] - first.g[None, :]
    h = residual * kernel.xi
    u = solve_C(ops, h)
    p = ops.xi * ops.rho1[None, :]
    q = ops.rho0[:, None] * ops.xi
    kernel_xx = -(u @ p.T)
    kernel_yy = -(q.T @ u)
    kernel_xy = u + apply_B(ops, u)
    constant = float(np.sum(kernel_xy * kernel.mu))
    centered = kernel_xy - constant
    h10 = cond_mean_x(ops, centered)
    h01 = cond_mean_y(ops, centered)
    diag_f = solve_resolvent_x(ops, h10 - apply_A_star(ops, h01))
    diag_g = solve_resolvent_y(ops, h01 - apply_A(ops, h10))
    return SecondOrderChaos(
        residual=residual,
        kernel_xx=kernel_xx,
        kernel_yy=kernel_yy,
        kernel_xy=kernel_xy,
        constant=constant,
        diag_const=constant,
        diag_f=diag_f,
        diag_g=diag_g,
    )


def second_chaos_value(batch: SampleBatch, chaos: SecondOrderChaos) -> float:
    """Pair-statistic evaluation of the second-order chaos on a batch.

    Off-diagonal pairs of like coordinates feed the xx and yy kernels, all
    ordered pairs feed the cross kernel, and the matched pairs subtract the
    compensator; the total is normalized by N (N - 1).
    """
    n = batch.n
    if n < 2:
        raise BatchTooSmall("second-order evaluation needs at least two points")
    ix, iy = batch.x_idx, batch.y_idx
    xx = chaos.kernel_xx[np.ix_(ix, ix)]
    yy = chaos.kernel_yy[np.ix_(iy, iy)]
    xy = chaos.kernel_xy[np.ix_(ix, iy)]
    sum_xx = float(xx.sum() - np.trace(xx))
    sum_yy = float(yy.sum() - np.trace(yy))
    sum_xy = float(xy.sum())
    sum_diag = float(
        n * chaos.diag_const + chaos.diag_f[ix].sum() + chaos.diag_g[iy].sum()
    )
    return (sum_xx + sum_yy + sum_xy - sum_diag) / (n * (n - 1))


def gamma_coefficients(
    eta: np.ndarray,
    kernel: GibbsKernel,
    ops: BridgeOperators,
    first: Optional[FirstOrderChaos] = None,
) -> np.ndarray:
    """Spectral coefficients of the centered integrand times the kernel.

    Entry (k, l), for k, l >= 1, is the tensor-basis coefficient of
    ``(eta - theta) * xi`` at level (k, l).  Only defined when the
    first-order variance vanishes, which is what makes these coefficients
    the complete description of the limiting law.

    Raises
    ------
    NotDegenerateFirstOrder
        If the first-order variance exceeds 1e-10.
    """
    eta = np.asarray(eta, dtype=float)
    if first is None:
        first = first_order_kernels(eta, kernel, ops)
    if first.variance > _FIRST_ORDER_TOL:
        raise NotDegenerateFirstOrder(
            f"first-order variance {first.variance:.3e} does not vanish"
        )
    coef = coefficients(ops, (eta - first.theta) * kernel.xi)
    return coef[1:, 1:]


def simulate_second_order_limit(
    gamma: np.ndarray,
    s: np.ndarray,
    n_draws: int,
    master_seed: int,
    chunk: int = 4096,
    stream_base: int = 0,
) -> np.ndarray:
    """Draw from the limiting law of the degenerate second-order statistic.

    The limit is the Gaussian quadratic form

        Z = sum_{k,l} d_kl (U_k V_l + s_k s_l U_l V_k
                            - s_l (U_k U_l - [k == l])
                            - s_k (V_k V_l - [k == l]))

    with independent standard normal families U and V and
    ``d_kl = gamma_kl / ((1 - s_k^2)(1 - s_l^2))``; levels past the end of
    ``s`` act as zero.  Draws are generated in fixed-size chunks, each from
    its own counter-based substream, so the output is reproducible for a
    given master seed regardless of how chunks are scheduled.
    """
    if n_draws < 1:
        raise ValueError("need at least one draw")
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    s = np.asarray(s, dtype=float)
    # Accept either the full singular-value vector (leading entry 1, possibly
    # off by float error) or the level >= 1 tail.
    active = s[1:] if s.size and abs(s[0] - 1.0) <= 1e-9 else s
    size = max(gamma.shape[0], gamma.shape[1], active.size, 1)
    s_pad = np.zeros(size)
    s_pad[: active.size] = active
    if np.any(s_pad < 0.0) or np.any(s_pad >= 1.0):
        raise ValueError("singular values past level zero must lie in [0, 1)")
    d = np.zeros((size, size))
    d[: gamma.shape[0], : gamma.shape[1]] = gamma
    d = d / np.outer(1.0 - s_pad**2, 1.0 - s_pad**2)
    d_swap = (d * np.outer(s_pad, s_pad)).T
    d_uu = d * s_pad[None, :]
    d_vv = d * s_pad[:, None]
    trace_uu = float(np.trace(d_uu))
    trace_vv = float(np.trace(d_vv))
    out = np.empty(n_draws)
    for block, lo in enumerate(range(0, n_draws, chunk)):
        hi = min(lo + chunk, n_draws)
        rng = stream(master_seed, stream_base + block)
        u = rng.standard_normal((hi - lo, size))
        v = rng.standard_normal((hi - lo, size))
        z = np.einsum("nk,kl,nl->n", u, d, v)
        z += np.einsum("nk,kl,nl->n", u, d_swap, v)
        z -= np.einsum("nk,kl,nl->n", u, d_uu, u) - trace_uu
        z -= np.einsum("nk,kl,nl->n", v, d_vv, v) - trace_vv
        out[lo:hi] = z
    return out


@lru_cache(maxsize=None)
def _config_grid(m0: int, m1: int, r: int):
    """All (x_1..x_r, y_1..y_r) index configurations and their weights factor."""
    x_cfg = np.array(list(itertools.product(range(m0), repeat=r)), dtype=np.intp)
    y_cfg = np.array(list(itertools.product(range(m1), repeat=r)), dtype=np.intp)
    x_all = np.repeat(x_cfg, y_cfg.shape[0], axis=0)
    y_all = np.tile(y_cfg, (x_cfg.shape[0], 1))
    return x_all, y_all


def u_n_variance_exact(
    h: np.ndarray,
    xi: np.ndarray,
    rho0: np.ndarray,
    rho1: np.ndarray,
    n: int,
) -> float:
    """Second moment of the linearized remainder statistic, by enumeration.

    Expands the square of the permutation sum into clusters of size r and
    integrates every term literally over the product law.  Exponential in
    both r and the support sizes, hence the caps n <= 4 and m0 m1 <= 16.
    """
    h = np.asarray(h, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rho0 = np.asarray(rho0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    m0, m1 = xi.shape
    if n > 4 or m0 * m1 > 16:
        raise TooLargeForEnumeration(
            f"exact variance enumeration capped at n <= 4 and m0 m1 <= 16"
            f" (got n = {n}, m0 m1 = {m0 * m1})"
        )
    if h.shape != xi.shape:
        raise ValueError("h and xi must share a shape")
    xim1 = xi - 1.0
    total = 0.0
    for r in range(1, n + 1):
        x_all, y_all = _config_grid(m0, m1, r)
        weights = np.prod(rho0[x_all], axis=1) * np.prod(rho1[y_all], axis=1)
        acc = 0.0
        for sigma in itertools.permutations(range(r)):
            for i in range(r):
                term = h[x_all[:, 0], y_all[:, 0]].copy()
                for j in range(1, r):
                    term *= xim1[x_all[:, j], y_all[:, j]]
                term *= h[x_all[:, i], y_all[:, sigma[i]]]
                for j in range(r):
                    if j != i:
                        term *= xim1[x_all[:, j], y_all[:, sigma[j]]]
                acc += float(weights @ term)
        total += acc * r / math.factorial(r)
    return total / (n * n)


def u_statistic_value(
    h: np.ndarray, xi: np.ndarray, x_idx: np.ndarray, y_idx: np.ndarray
) -> float:
    """The linearized remainder statistic on one explicit configuration.

    Evaluates (1 / (n n!)) sum_sigma sum_i h(x_i, y_sigma_i)
    prod_{k != i} xi(x_k, y_sigma_k) literally, permutation by permutation.
    Used as the direct-definition route the cluster-sum second moment is
    checked against; capped at n <= 6.
    """
    n = len(x_idx)
    if n > 6:
        raise TooLargeForEnumeration("direct evaluation capped at n <= 6")
    total = 0.0
    for sigma in itertools.permutations(range(n)):
        factors = [xi[x_idx[k], y_idx[sigma[k]]] for k in range(n)]
        for i in range(n):
            prod = 1.0
            for k in range(n):
                if k != i:
                    prod *= factors[k]
            total += h[x_idx[i], y_idx[sigma[i]]] * prod
    return total / (n * math.factorial(n))


def cycle_mgf(r: int, u: float) -> float:
    """E[u^(number of cycles)] for a uniform permutation of r letters."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return math.prod((i - 1.0 + u) / i for i in range(1, r + 1))


def _cycle_count(sigma: tuple) -> int:
    seen = [False] * len(sigma)
    count = 0
    for start in range(len(sigma)):
        if seen[start]:
            continue
        count += 1
        j = start
        while not seen[j]:
            seen[j] = True
            j = sigma[j]
    return count


def u_n_variance_bound(
    h: np.ndarray,
    xi: np.ndarray,
    rho0: np.ndarray,
    rho1: np.ndarray,
    n: int,
    s1: float,
) -> float:
    """Cluster-sum upper bound for ``n^2`` times the exact second moment.

    Each cluster term is bounded through the second singular value and the
    product-law norms of ``xi - 1`` and ``h``:

        sum_r (r^2 / r!) sum_sigma s1^(2(r - #sigma)) vs0^(2(#sigma - 1)) vs^2

    with #sigma the cycle count.  Permutations are enumerated directly, so
    the same n <= 4 cap applies as for the exact value.
    """
    if n > 8:
        raise TooLargeForEnumeration("bound enumeration capped at n <= 8")
    product = np.outer(np.asarray(rho0, dtype=float), np.asarray(rho1, dtype=float))
    vs0_sq = float(np.sum((np.asarray(xi) - 1.0) ** 2 * product))
    vs_sq = float(np.sum(np.asarray(h) ** 2 * product))
    total = 0.0
    for r in range(1, n + 1):
        inner = 0.0
        for sigma in itertools.permutations(range(r)):
            cycles = _cycle_count(sigma)
            inner += s1 ** (2 * (r - cycles)) * vs0_sq ** (cycles - 1)
        total += inner * vs_sq * r * r / math.factorial(r)
    return total
