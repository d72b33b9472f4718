import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schrochaos.errors import (
    DuplicateAtom,
    EmptySupport,
    NegativeCost,
    NonpositiveWeight,
    NotADistribution,
)
from schrochaos.measures import (
    CostSpec,
    as_distribution,
    cost_matrix,
    make_discrete_measure,
    sample,
    sample_bridge,
    sample_product,
    stream,
)


class TestMakeDiscreteMeasure:
    def test_scalars_promoted_to_columns(self):
        m = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        assert m.atoms.shape == (2, 1)
        assert m.size == 2 and m.dim == 1

    def test_weights_normalized(self):
        m = make_discrete_measure([0.0, 1.0, 2.0], [2.0, 3.0, 5.0])
        assert math.isclose(m.weights.sum(), 1.0, abs_tol=1e-15)
        np.testing.assert_allclose(m.weights, [0.2, 0.3, 0.5], atol=1e-15)

    def test_result_is_frozen(self):
        m = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            m.weights[0] = 2.0

    def test_empty_support_rejected(self):
        with pytest.raises(EmptySupport):
            make_discrete_measure([], [])

    def test_duplicate_atom_rejected(self):
        with pytest.raises(DuplicateAtom):
            make_discrete_measure([1.0, 1.0], [0.5, 0.5])

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(NonpositiveWeight):
            make_discrete_measure([0.0, 1.0], [1.0, 0.0])
        with pytest.raises(NonpositiveWeight):
            make_discrete_measure([0.0, 1.0], [1.0, -1.0])
        with pytest.raises(NonpositiveWeight):
            make_discrete_measure([0.0, 1.0], [1.0, math.nan])

    def test_weight_count_mismatch(self):
        with pytest.raises(ValueError):
            make_discrete_measure([0.0, 1.0], [1.0])

    @given(
        st.lists(
            st.floats(min_value=1e-3, max_value=1e3),
            min_size=1,
            max_size=8,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_normalization_property(self, raw):
        atoms = list(range(len(raw)))
        m = make_discrete_measure(atoms, raw)
        assert abs(math.fsum(m.weights.tolist()) - 1.0) <= 1e-12
        assert np.all(m.weights > 0.0)


class TestCostMatrix:
    def test_squared_euclidean_binary_atoms(self):
        r0 = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        r1 = make_discrete_measure([0.0, 1.0], [0.3, 0.7])
        c = cost_matrix(CostSpec(kind="squared-euclidean"), r0, r1)
        np.testing.assert_allclose(c, [[0.0, 1.0], [1.0, 0.0]])

    def test_power_cost(self):
        r0 = make_discrete_measure([0.0, 2.0], [0.5, 0.5])
        r1 = make_discrete_measure([0.0], [1.0])
        c = cost_matrix(CostSpec(kind="euclidean-power", power=3.0), r0, r1)
        np.testing.assert_allclose(c, [[0.0], [8.0]])

    def test_explicit_matrix_roundtrip(self):
        r0 = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        r1 = make_discrete_measure([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
        entries = np.arange(6, dtype=float).reshape(2, 3)
        c = cost_matrix(CostSpec(kind="explicit-matrix", entries=entries), r0, r1)
        np.testing.assert_array_equal(c, entries)
        c[0, 0] = 99.0  # the returned matrix must be a private copy
        assert entries[0, 0] == 0.0

    def test_negative_explicit_entry_rejected(self):
        r0 = make_discrete_measure([0.0], [1.0])
        r1 = make_discrete_measure([0.0], [1.0])
        spec = CostSpec(kind="explicit-matrix", entries=np.array([[-1.0]]))
        with pytest.raises(NegativeCost):
            cost_matrix(spec, r0, r1)

    def test_explicit_shape_mismatch(self):
        r0 = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        r1 = make_discrete_measure([0.0], [1.0])
        spec = CostSpec(kind="explicit-matrix", entries=np.zeros((3, 3)))
        with pytest.raises(ValueError):
            cost_matrix(spec, r0, r1)

    def test_dimension_mismatch(self):
        r0 = make_discrete_measure([[0.0, 0.0]], [1.0])
        r1 = make_discrete_measure([0.0], [1.0])
        with pytest.raises(ValueError):
            cost_matrix(CostSpec(kind="squared-euclidean"), r0, r1)

    def test_unknown_kind_rejected_at_spec(self):
        with pytest.raises(ValueError):
            CostSpec(kind="manhattan")

    def test_power_below_one_rejected(self):
        with pytest.raises(ValueError):
            CostSpec(kind="euclidean-power", power=0.5)


class TestStreams:
    def test_same_key_same_draws(self):
        a = stream(42, 7).random(16)
        b = stream(42, 7).random(16)
        np.testing.assert_array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = stream(42, 0).random(16)
        b = stream(42, 1).random(16)
        assert not np.array_equal(a, b)

    def test_large_indices_wrap_into_key(self):
        # stream indices beyond 64 bits must still key a valid generator
        g = stream(1, (1 << 70) + 5)
        h = stream(1, 5)
        np.testing.assert_array_equal(g.random(4), h.random(4))


class TestSampling:
    def test_sample_needs_positive_count(self, rng):
        m = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            sample(m, 0, rng)

    def test_sample_indices_in_range(self, rng):
        m = make_discrete_measure([0.0, 1.0, 2.0], [0.1, 0.2, 0.7])
        idx = sample(m, 1000, rng)
        assert idx.min() >= 0 and idx.max() <= 2

    def test_product_batch_order_and_shape(self, rng):
        r0 = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        r1 = make_discrete_measure([0.0, 1.0], [0.3, 0.7])
        batch = sample_product(r0, r1, 12, rng, seed=9)
        assert batch.n == 12 and batch.source == "product" and batch.seed == 9
        assert batch.x_idx.shape == (12,) and batch.y_idx.shape == (12,)

    def test_product_x_consumed_before_y(self):
        # the x block must come first in the stream so draws are pinned
        r0 = make_discrete_measure([0.0, 1.0], [0.5, 0.5])
        r1 = make_discrete_measure([0.0, 1.0], [0.3, 0.7])
        batch = sample_product(r0, r1, 6, stream(3, 0))
        g = stream(3, 0)
        ix = sample(r0, 6, g)
        iy = sample(r1, 6, g)
        np.testing.assert_array_equal(batch.x_idx, ix)
        np.testing.assert_array_equal(batch.y_idx, iy)

    def test_bridge_rejects_non_distribution(self, rng):
        with pytest.raises(NotADistribution):
            sample_bridge(np.array([[0.5, 0.2], [0.2, 0.2]]), 4, rng)
        with pytest.raises(NotADistribution):
            sample_bridge(np.array([[1.2, -0.2], [0.0, 0.0]]), 4, rng)

    def test_bridge_cell_frequency_sym2(self, sym2):
        # frequency of the (0, 0) cell over 1e6 draws, against e/(2(1+e))
        mu00 = math.e / (2.0 * (1.0 + math.e))
        batch = sample_bridge(sym2.kernel.mu, 10**6, stream(2024, 0))
        hit = float(np.mean((batch.x_idx == 0) & (batch.y_idx == 0)))
        sigma = math.sqrt(mu00 * (1.0 - mu00) / 10**6)
        assert abs(hit - mu00) <= 3.0 * sigma

    def test_product_marginal_frequencies(self, asym23):
        batch = sample_product(asym23.rho0, asym23.rho1, 10**5, stream(77, 0))
        f1 = float(np.mean(batch.y_idx == 1))
        sigma = math.sqrt(0.7 * 0.3 / 10**5)
        assert abs(f1 - 0.7) <= 4.0 * sigma


class TestAsDistribution:
    def test_valid_vector_passes_through(self):
        w = as_distribution([0.25, 0.75])
        np.testing.assert_array_equal(w, [0.25, 0.75])

    def test_rejections(self):
        with pytest.raises(NotADistribution):
            as_distribution([])
        with pytest.raises(NotADistribution):
            as_distribution([0.5, -0.5, 1.0])
        with pytest.raises(NotADistribution):
            as_distribution([0.5, 0.4])
