import json
import math
import os

import numpy as np
import pytest

from schrochaos.chaos import first_order_kernels
from schrochaos.errors import (
    DegenerateVariance,
    EmptySample,
    NotDegenerateFirstOrder,
    SchemaViolation,
)
from schrochaos.fixtures import build_problem
from schrochaos.harness import (
    ExperimentConfig,
    compare_with_cuturi,
    ks_distance,
    ks_two_sample,
    normal_cdf,
    run_clt,
    run_experiment,
    run_identity_suite,
    run_remainder_decay,
    run_second_order,
    run_unbiasedness,
    sample_statistics,
)
from schrochaos.measures import stream


def clt_config(tmp_path, **kw):
    base = dict(
        experiment="clt",
        fixture="asym23",
        n=6,
        replicates=100,
        seed=1,
        out_dir=str(tmp_path),
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfigValidation:
    def test_minimal_defaults(self):
        c = ExperimentConfig(experiment="clt")
        assert c.fixture == "sym2" and c.eps == 1.0 and c.tol == 1e-12
        assert c.method == "auto" and c.resolved_source == "product"

    @pytest.mark.parametrize(
        "field,kw",
        [
            ("experiment", dict(experiment="bootstrap")),
            ("fixture", dict(experiment="clt", fixture="sym3")),
            ("eta", dict(experiment="clt", eta="identity")),
            ("eta", dict(experiment="clt", eta=((1.0, math.inf), (0.0, 0.0)))),
            ("replicates", dict(experiment="clt", replicates=99)),
            ("seed", dict(experiment="clt", seed=-1)),
            ("eps", dict(experiment="clt", eps=0.0)),
            ("tol", dict(experiment="clt", tol=1e-3)),
            ("method", dict(experiment="clt", method="fast")),
            ("source", dict(experiment="clt", source="both")),
            ("n", dict(experiment="clt", n=1)),
            ("n", dict(experiment="clt", n=17)),
            ("n", dict(experiment="unbiased", n=0)),
            ("n", dict(experiment="compare-cuturi", n=15)),
            ("method", dict(experiment="clt", n=12, method="brute")),
            ("n_list", dict(experiment="clt", n_list=(4, 6))),
            ("n_list", dict(experiment="remainder", n_list=(4,))),
            ("n_list", dict(experiment="remainder", n_list=(6, 4))),
            ("n_list", dict(experiment="remainder", n_list=(4, 16))),
            ("method", dict(experiment="remainder", n_list=(4, 10), method="brute")),
            ("source", dict(experiment="clt", source="bridge")),
            ("source", dict(experiment="second-order", source="bridge")),
            ("source", dict(experiment="remainder", source="product")),
        ],
    )
    def test_rejections_name_the_field(self, field, kw):
        with pytest.raises(SchemaViolation) as err:
            ExperimentConfig(**kw)
        assert err.value.field == field

    def test_eta_matrix_normalized_to_tuples(self):
        c = ExperimentConfig(experiment="clt", eta=np.ones((2, 2)))
        assert c.eta == ((1.0, 1.0), (1.0, 1.0))

    def test_remainder_default_sizes(self):
        c = ExperimentConfig(experiment="remainder", replicates=100)
        assert c.n_list == (4, 6, 8, 10, 12)
        assert c.resolved_source == "bridge"

    def test_resolved_method_thresholds(self):
        c = ExperimentConfig(experiment="clt")
        assert c.resolved_method(6) == "brute"
        assert c.resolved_method(8) == "permanent"
        forced = ExperimentConfig(experiment="clt", method="permanent")
        assert forced.resolved_method(3) == "permanent"


class TestDistances:
    def test_normal_cdf_values(self):
        assert math.isclose(normal_cdf(0.0), 0.5, abs_tol=1e-15)
        assert math.isclose(normal_cdf(1.0, 1.0, 2.0), 0.5, abs_tol=1e-15)
        assert math.isclose(
            normal_cdf(1.96), 0.9750021048517795, abs_tol=1e-12
        )

    def test_ks_single_point(self):
        # one sample at the median of the reference: sup gap is 1/2
        assert math.isclose(ks_distance([0.0], normal_cdf), 0.5, abs_tol=1e-15)

    def test_ks_against_own_quantiles(self):
        # plugging exact quantile levels gives the minimal staircase gap
        grid = (np.arange(100) + 0.5) / 100
        samples = [math.sqrt(2.0) * _erfinv(2.0 * u - 1.0) for u in grid]
        assert ks_distance(samples, normal_cdf) <= 0.5 / 100 + 1e-12

    def test_ks_self_noise(self):
        draws = stream(12, 0).standard_normal(4000)
        assert ks_distance(draws, normal_cdf) <= 1.63 / math.sqrt(4000) * 1.5

    def test_ks_detects_shift(self):
        draws = stream(12, 1).standard_normal(4000) + 3.0
        assert ks_distance(draws, normal_cdf) > 0.8

    def test_two_sample_hand_case(self):
        assert math.isclose(ks_two_sample([1.0, 2.0], [1.5]), 0.5, abs_tol=1e-15)

    def test_two_sample_extremes(self):
        same = [0.1, 0.4, 0.9]
        assert ks_two_sample(same, same) == 0.0
        assert ks_two_sample([0.0, 1.0], [5.0, 6.0]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(EmptySample):
            ks_distance([], normal_cdf)
        with pytest.raises(EmptySample):
            ks_two_sample([], [1.0])


def _erfinv(y, lo=-6.0, hi=6.0):
    for _ in range(80):  # bisection is plenty for test accuracy
        mid = 0.5 * (lo + hi)
        if math.erf(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestRunCLT:
    def test_smoke_summary_and_files(self, tmp_path):
        res = run_clt(clt_config(tmp_path))
        assert res.passed in (True, False)
        assert set(res.summary) == {
            "mean_t_n",
            "se_t_n",
            "var_scaled",
            "var_rel_err",
            "ks_normal",
        }
        assert len(res.columns["t_n"]) == 100
        doc = json.loads(open(res.files[0]).read())
        assert doc["schema"] == "schrochaos/experiment-v1"
        assert doc["config"]["source"] == "product"
        assert doc["params"]["first_order_variance"] > 0.0
        with open(res.files[1]) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "replicate,t_n,l_n,scaled_dev"
        assert len(lines) == 101

    def test_scaled_column_consistent(self, tmp_path):
        res = run_clt(clt_config(tmp_path))
        theta = res.params["theta"]
        want = math.sqrt(6) * (np.asarray(res.columns["t_n"]) - theta)
        np.testing.assert_allclose(res.columns["scaled_dev"], want, atol=1e-12)

    def test_degenerate_fixture_rejected(self, tmp_path):
        with pytest.raises(DegenerateVariance):
            run_clt(clt_config(tmp_path, fixture="sym2"))

    def test_methods_agree(self, tmp_path):
        brute = run_clt(clt_config(tmp_path, method="brute", out_dir=str(tmp_path / "a")))
        perm = run_clt(clt_config(tmp_path, method="permanent", out_dir=str(tmp_path / "b")))
        np.testing.assert_allclose(
            brute.columns["t_n"], perm.columns["t_n"], rtol=1e-10
        )

    def test_rerun_is_byte_identical(self, tmp_path):
        a = run_clt(clt_config(tmp_path, out_dir=str(tmp_path / "a")))
        b = run_clt(clt_config(tmp_path, out_dir=str(tmp_path / "b")))
        for pa, pb in zip(a.files, b.files):
            assert open(pa, "rb").read() == open(pb, "rb").read()

    def test_thread_count_does_not_change_bytes(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SCHRO_CHAOS_THREADS", "1")
        a = run_clt(clt_config(tmp_path, out_dir=str(tmp_path / "t1")))
        monkeypatch.setenv("SCHRO_CHAOS_THREADS", "3")
        b = run_clt(clt_config(tmp_path, out_dir=str(tmp_path / "t3")))
        for pa, pb in zip(a.files, b.files):
            assert open(pa, "rb").read() == open(pb, "rb").read()

    def test_wrong_experiment_rejected(self, tmp_path):
        cfg = ExperimentConfig(experiment="unbiased", out_dir=str(tmp_path))
        with pytest.raises(ValueError):
            run_clt(cfg)


class TestRunSecondOrder:
    def test_smoke_and_z_column(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="second-order",
            fixture="sym2",
            n=6,
            replicates=100,
            seed=2,
            out_dir=str(tmp_path),
        )
        res = run_second_order(cfg)
        theta = res.params["theta"]
        const = res.params["second_order_constant"]
        want = 6.0 * (np.asarray(res.columns["t_n"]) - theta) + const
        np.testing.assert_allclose(res.columns["z"], want, atol=1e-12)
        assert res.summary["limit_draws"] == 1000
        assert "ks_two_sample" in res.summary

    def test_nondegenerate_fixture_rejected(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="second-order",
            fixture="asym23",
            n=6,
            replicates=100,
            out_dir=str(tmp_path),
        )
        with pytest.raises(NotDegenerateFirstOrder):
            run_second_order(cfg)


class TestRunRemainder:
    def test_smoke_slope(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="remainder",
            fixture="asym23",
            n_list=(4, 6),
            replicates=200,
            seed=3,
            out_dir=str(tmp_path),
        )
        res = run_remainder_decay(cfg)
        assert res.summary["slope"] < 0.0
        assert res.passed in (True, False)
        # one CSV per size plus the JSON summary
        assert len(res.files) == 3
        for path in res.files:
            assert os.path.exists(path)

    def test_constant_integrand_flagged(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="remainder",
            fixture="sym2",
            eta=((1.0, 1.0), (1.0, 1.0)),
            n_list=(4, 6),
            replicates=100,
            seed=3,
            out_dir=str(tmp_path),
        )
        res = run_remainder_decay(cfg)
        assert res.summary["slope"] is None
        assert res.summary["degenerate_remainder"] is True
        assert res.passed is None


class TestRunUnbiased:
    def test_bridge_mean_matches_theta(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="unbiased",
            fixture="sym2",
            n=4,
            replicates=2000,
            seed=4,
            out_dir=str(tmp_path),
        )
        res = run_unbiasedness(cfg)
        assert res.passed is True
        assert abs(res.summary["mean_t_n"] - res.params["theta"]) <= 3.0 * res.summary["se_t_n"]

    def test_product_source_is_report_only(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="unbiased",
            fixture="sym2",
            n=4,
            replicates=100,
            seed=4,
            source="product",
            out_dir=str(tmp_path),
        )
        res = run_unbiasedness(cfg)
        assert res.passed is None


class TestCompareCuturi:
    def test_single_point_difference_vanishes(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="compare-cuturi",
            fixture="asym23",
            n=1,
            replicates=100,
            seed=5,
            out_dir=str(tmp_path),
        )
        res = compare_with_cuturi(cfg)
        assert res.passed is None
        np.testing.assert_allclose(res.columns["diff"], 0.0, atol=1e-12)

    def test_smoke_columns(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="compare-cuturi",
            fixture="asym23",
            n=4,
            replicates=100,
            seed=5,
            out_dir=str(tmp_path),
        )
        res = compare_with_cuturi(cfg)
        diff = np.asarray(res.columns["bridge_cost"]) - np.asarray(
            res.columns["sinkhorn_cost"]
        )
        np.testing.assert_allclose(res.columns["diff"], diff, atol=1e-12)


class TestRunExperiment:
    def test_dispatch(self, tmp_path):
        cfg = clt_config(tmp_path)
        res = run_experiment(cfg)
        assert res.experiment == "clt"


class TestStatisticalProperties:
    def test_consistency_median_decreases(self, asym23):
        # the absolute error shrinks with N; allow one inversion
        theta = first_order_kernels(asym23.cost, asym23.kernel, asym23.ops).theta
        medians = []
        for n in (4, 8, 12, 16):
            t_arr, _ = sample_statistics(
                asym23, asym23.cost, n, 200, seed=29, source="product"
            )
            medians.append(float(np.median(np.abs(t_arr - theta))))
        inversions = sum(
            1 for a, b in zip(medians, medians[1:]) if b >= a
        )
        assert inversions <= 1, medians

    def test_high_temperature_mean(self):
        # eps >> cost decouples the pair, so the mean tends to the
        # product-measure average of the integrand
        prob = build_problem("asym23", eps=1e6)
        first = first_order_kernels(prob.cost, prob.kernel, prob.ops)
        want = float(
            prob.rho0.weights @ prob.cost @ prob.rho1.weights
        )
        assert abs(first.theta - want) <= 1e-6


class TestIdentitySuite:
    def test_all_checks_pass(self):
        results = run_identity_suite(master_seed=20260814, draws=20)
        assert [r.criterion for r in results] == [1, 2, 3, 4, 5, 6, 7]
        for r in results:
            assert r.passed, (r.criterion, r.name, r.residual)
            assert r.residual <= r.threshold
