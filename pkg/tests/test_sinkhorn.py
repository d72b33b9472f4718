import math

import numpy as np
import pytest

from schrochaos.errors import MarginalMismatch, NonConvergence, OverflowInKernel
from schrochaos.measures import CostSpec, cost_matrix, make_discrete_measure
from schrochaos.sinkhorn import (
    entropic_objective,
    markov_kernel,
    solve_bridge,
)

E = math.e


def _binary_problem(w1=(0.5, 0.5)):
    r0 = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
    r1 = make_discrete_measure([0.0, 1.0], list(w1))
    c = cost_matrix(CostSpec(kind="squared-euclidean"), r0, r1)
    return r0, r1, c


def _fixed_point_oracle(cost, w0, w1, eps, tol):
    """Independent dense-domain scaling iteration, no log tricks.

    Safe here because the test costs are tiny; used to cross-check the
    log-domain solver at a tighter tolerance than it was asked for.
    """
    k = np.exp(-cost / eps)
    u = np.ones(cost.shape[0])
    v = np.ones(cost.shape[1])
    for _ in range(200_000):
        u = 1.0 / (k @ (v * w1))
        v = 1.0 / (k.T @ (u * w0))
        xi = u[:, None] * k * v[None, :]
        res = max(
            np.max(np.abs(xi @ w1 - 1.0)), np.max(np.abs(xi.T @ w0 - 1.0))
        )
        if res <= tol:
            return xi
    raise AssertionError("oracle iteration did not converge")


class TestSolveBridge:
    def test_symmetric_closed_form(self, sym2):
        xi = sym2.kernel.xi
        hi = 2.0 * E / (1.0 + E)
        lo = 2.0 / (1.0 + E)
        np.testing.assert_allclose(np.diag(xi), [hi, hi], atol=1e-12, rtol=0.0)
        np.testing.assert_allclose(
            [xi[0, 1], xi[1, 0]], [lo, lo], atol=1e-12, rtol=0.0
        )

    def test_marginal_residuals_both_fixtures(self, problems):
        for prob in problems.values():
            xi, w0, w1 = prob.kernel.xi, prob.kernel.rho0, prob.kernel.rho1
            assert np.max(np.abs(xi @ w1 - 1.0)) <= 1e-12
            assert np.max(np.abs(xi.T @ w0 - 1.0)) <= 1e-12

    def test_against_independent_fixed_point(self, asym23):
        oracle = _fixed_point_oracle(
            asym23.cost,
            asym23.kernel.rho0,
            asym23.kernel.rho1,
            asym23.eps,
            tol=1e-13,
        )
        np.testing.assert_allclose(asym23.kernel.xi, oracle, atol=1e-11, rtol=0.0)

    def test_mu_columns_sum_to_target(self, asym23):
        np.testing.assert_allclose(
            asym23.kernel.mu.sum(axis=0), [0.3, 0.7], atol=1e-12, rtol=0.0
        )
        np.testing.assert_allclose(
            asym23.kernel.mu.sum(axis=1), [0.5, 0.5], atol=1e-12, rtol=0.0
        )

    def test_potential_gauge(self, problems):
        for prob in problems.values():
            k = prob.kernel
            assert abs(float(k.a @ k.rho0)) <= 1e-12

    def test_kernel_consistent_with_potentials(self, asym23):
        k = asym23.kernel
        rebuilt = np.exp((-asym23.cost + k.a[:, None] + k.b[None, :]) / k.eps)
        np.testing.assert_allclose(rebuilt, k.xi, atol=1e-14, rtol=0.0)

    def test_non_convergence_raises(self):
        r0, r1, c = _binary_problem((0.3, 0.7))
        with pytest.raises(NonConvergence):
            solve_bridge(r0, r1, c, eps=1.0, tol=1e-12, max_iter=2)

    def test_underflow_raises(self):
        r0, r1, _ = _binary_problem()
        spec = CostSpec(kind="explicit-matrix", entries=np.array([[0.0, 2000.0], [2000.0, 0.0]]))
        c = cost_matrix(spec, r0, r1)
        with pytest.raises(OverflowInKernel):
            solve_bridge(r0, r1, c, eps=1.0)

    def test_input_validation(self):
        r0, r1, c = _binary_problem()
        with pytest.raises(ValueError):
            solve_bridge(r0, r1, c, eps=0.0)
        with pytest.raises(ValueError):
            solve_bridge(r0, r1, c, eps=1.0, tol=1e-3)
        with pytest.raises(ValueError):
            solve_bridge(r0, r1, c[:, :1], eps=1.0)

    def test_high_temperature_limit(self):
        # eps >> cost makes the coupling collapse to the product
        r0, r1, c = _binary_problem((0.3, 0.7))
        kernel, _ = solve_bridge(r0, r1, c, eps=1e8)
        np.testing.assert_allclose(kernel.xi, np.ones((2, 2)), atol=1e-7)

    def test_report_fields(self, sym2):
        rep = sym2.report
        assert rep.converged and rep.iterations >= 1 and rep.residual <= 1e-12


class TestMarkovKernel:
    def test_rows_normalize(self, asym23):
        p = markov_kernel(asym23.cost, asym23.rho1, asym23.eps)
        np.testing.assert_allclose(p.sum(axis=1), [1.0, 1.0], atol=1e-14)

    def test_symmetric_row_closed_form(self, sym2):
        p = markov_kernel(sym2.cost, sym2.rho1, sym2.eps)
        np.testing.assert_allclose(
            p[0], [E / (1.0 + E), 1.0 / (1.0 + E)], atol=1e-14, rtol=0.0
        )

    def test_shape_validation(self, sym2):
        with pytest.raises(ValueError):
            markov_kernel(sym2.cost[:, :1], sym2.rho1, 1.0)
        with pytest.raises(ValueError):
            markov_kernel(sym2.cost, sym2.rho1, -1.0)


class TestEntropicObjective:
    def test_bridge_beats_product(self, sym2):
        k = sym2.kernel
        product = np.outer(k.rho0, k.rho1)
        args = (sym2.cost, sym2.eps, sym2.rho0, sym2.rho1)
        assert entropic_objective(k.mu, *args) < entropic_objective(product, *args)

    def test_first_order_optimality(self, sym2, rng):
        # feasible perturbations keep marginals: t * (outer of mean-zero signs)
        k = sym2.kernel
        args = (sym2.cost, sym2.eps, sym2.rho0, sym2.rho1)
        base = entropic_objective(k.mu, *args)
        for _ in range(20):
            d = rng.normal(size=(2, 2))
            d -= d.mean(axis=0, keepdims=True)
            d -= d.mean(axis=1, keepdims=True)
            perturbed = k.mu + 1e-3 * d
            if np.any(perturbed < 0.0):
                continue
            assert entropic_objective(perturbed, *args) >= base

    def test_marginal_mismatch_raises(self, sym2):
        bad = np.full((2, 2), 0.25)
        bad[0, 0] += 0.1
        bad[1, 1] -= 0.1
        with pytest.raises(MarginalMismatch):
            entropic_objective(bad, sym2.cost, sym2.eps, sym2.rho0, sym2.rho1)
