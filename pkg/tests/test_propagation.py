"""Uncertainty propagation: analytic, series expansion, Monte Carlo."""

import numpy as np
import pytest

from uncertlab.distributions import (Gaussian, InputQuantity, JointInputModel,
                                     Rectangular)
from uncertlab.errors import ConfigError, MonteCarloError
from uncertlab.expr import parse_model
from uncertlab.propagation import (EmpiricalCDF, implied_coverage,
                                   propagate_analytic, propagate_monte_carlo,
                                   propagate_taylor1, propagate_taylor2,
                                   sensitivity_budget, summarize)


def gaussian_joint(means, sds, corr=None):
    qs = [InputQuantity(f"X{i + 1}", Gaussian(m, s))
          for i, (m, s) in enumerate(zip(means, sds))]
    return JointInputModel(qs, corr)


class TestAnalytic:
    def test_affine_model_exact_variance(self):
        m = parse_model("2 * X1 - 0.5 * X2 + 1")
        joint = gaussian_joint([1.0, 4.0], [0.2, 0.3])
        r = propagate_analytic(m, joint)
        assert r.y == pytest.approx(2.0 - 2.0 + 1.0, rel=1e-14)
        assert r.u == pytest.approx(np.sqrt(4 * 0.04 + 0.25 * 0.09),
                                    rel=1e-13)
        assert r.U == pytest.approx(2 * r.u, rel=1e-15)
        assert r.method == "analytic"

    def test_correlation_term_enters(self):
        m = parse_model("2 * X1 - 0.5 * X2 + 1")
        corr = np.array([[1.0, 0.5], [0.5, 1.0]])
        joint = gaussian_joint([1.0, 4.0], [0.2, 0.3], corr)
        r = propagate_analytic(m, joint)
        # 4*.04 + .25*.09 + 2*(2)(-0.5)(0.5*0.2*0.3)
        assert r.u ** 2 == pytest.approx(0.1225, rel=1e-13)

    def test_nonlinear_model_refused(self):
        m = parse_model("X1 * X2")
        joint = gaussian_joint([2.0, 3.0], [0.1, 0.1])
        with pytest.raises(ConfigError, match="affine"):
            propagate_analytic(m, joint)

    def test_rectangular_inputs_fine_when_affine(self):
        m = parse_model("X1 + X2")
        joint = JointInputModel([
            InputQuantity("X1", Rectangular(0.0, 1.0)),
            InputQuantity("X2", Rectangular(0.0, 1.0)),
        ])
        r = propagate_analytic(m, joint)
        assert r.u ** 2 == pytest.approx(2.0 / 12.0, rel=1e-13)


class TestTaylor:
    def test_product_model_first_order(self):
        m = parse_model("X1 * X2")
        joint = gaussian_joint([2.0, 3.0], [0.1, 0.1])
        r = propagate_taylor1(m, joint)
        assert r.y == pytest.approx(6.0, rel=1e-14)
        assert r.u ** 2 == pytest.approx(0.13, rel=1e-13)

    def test_product_model_second_order_correction(self):
        m = parse_model("X1 * X2")
        joint = gaussian_joint([2.0, 3.0], [0.1, 0.1])
        r = propagate_taylor2(m, joint)
        # adds (1/2) * 1^2 * u1^2 u2^2 twice -> +0.0001
        assert r.u ** 2 == pytest.approx(0.1301, rel=1e-13)

    @pytest.mark.parametrize("u0", [0.1, 1.0, 3.0])
    def test_pure_square_second_order_is_exact(self, u0):
        m = parse_model("X1 ^ 2")
        joint = gaussian_joint([0.0], [u0])
        r = propagate_taylor2(m, joint)
        assert r.u ** 2 == pytest.approx(2 * u0 ** 4, rel=1e-12)

    def test_first_order_blind_at_stationary_point(self):
        m = parse_model("X1 ^ 2")
        joint = gaussian_joint([0.0], [1.0])
        r = propagate_taylor1(m, joint)
        assert r.u == 0.0

    def test_correlated_inputs_rejected(self):
        m = parse_model("X1 * X2")
        corr = np.array([[1.0, 0.3], [0.3, 1.0]])
        joint = gaussian_joint([2.0, 3.0], [0.1, 0.1], corr)
        with pytest.raises(ConfigError, match="independent"):
            propagate_taylor1(m, joint)
        with pytest.raises(ConfigError, match="independent"):
            propagate_taylor2(m, joint)

    def test_affine_all_three_methods_agree(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(1, 5))
            coeffs = rng.uniform(-3, 3, size=n)
            const = rng.uniform(-2, 2)
            text = " + ".join([f"{c:.8f} * X{i + 1}"
                               for i, c in enumerate(coeffs)])
            m = parse_model(f"{text} + {const:.8f}")
            joint = gaussian_joint(rng.uniform(-2, 2, size=n),
                                   rng.uniform(0.05, 0.5, size=n))
            ra = propagate_analytic(m, joint)
            r1 = propagate_taylor1(m, joint)
            r2 = propagate_taylor2(m, joint)
            assert r1.u == pytest.approx(ra.u, rel=1e-12)
            assert r2.u == pytest.approx(ra.u, rel=1e-12)
            assert r1.y == pytest.approx(ra.y, rel=1e-12)


class TestMonteCarlo:
    def test_product_model_matches_taylor(self):
        m = parse_model("X1 * X2")
        joint = gaussian_joint([2.0, 3.0], [0.1, 0.1])
        r, ecdf = propagate_monte_carlo(m, joint, M=200_000, seed=1)
        assert r.y == pytest.approx(6.0, abs=5 * r.mc_diagnostics.mc_standard_error)
        assert r.u == pytest.approx(np.sqrt(0.1301), rel=0.02)
        assert r.method == "monte_carlo"
        assert r.mc_diagnostics.M == 200_000
        assert r.mc_diagnostics.domain_error_count == 0

    def test_result_independent_of_chunking(self):
        # 65536-sample chunks with per-chunk substreams: any M gives the
        # same leading draws, so two different M runs share a prefix
        m = parse_model("X1 + X2")
        joint = gaussian_joint([0.0, 0.0], [1.0, 1.0])
        _, e1 = propagate_monte_carlo(m, joint, M=70_000, seed=3)
        _, e2 = propagate_monte_carlo(m, joint, M=140_000, seed=3)
        small = set(np.round(e1.sorted_values[:100], 12))
        big = set(np.round(e2.sorted_values, 12))
        assert small <= big

    def test_deterministic_per_seed(self):
        m = parse_model("sin(X1)")
        joint = gaussian_joint([0.5], [0.2])
        r1, e1 = propagate_monte_carlo(m, joint, M=10_000, seed=7)
        r2, e2 = propagate_monte_carlo(m, joint, M=10_000, seed=7)
        assert r1.y == r2.y and r1.u == r2.u
        np.testing.assert_array_equal(e1.sorted_values, e2.sorted_values)

    def test_interval_has_requested_coverage(self):
        m = parse_model("X1")
        joint = gaussian_joint([0.0], [1.0])
        r, _ = propagate_monte_carlo(m, joint, M=400_000, seed=2,
                                     coverage=0.95)
        lo, hi = r.interval
        assert lo == pytest.approx(-1.96, abs=0.02)
        assert hi == pytest.approx(1.96, abs=0.02)

    def test_domain_failures_counted_then_fatal(self):
        # ln(X1) with mass at negative values: some rows fail
        m = parse_model("ln(X1)")
        joint = JointInputModel([InputQuantity("X1", Gaussian(5.0, 1.0))])
        r, _ = propagate_monte_carlo(m, joint, M=10_000, seed=0)
        assert r.mc_diagnostics.domain_error_count < 100

        heavy = JointInputModel([InputQuantity("X1", Gaussian(0.0, 1.0))])
        with pytest.raises(MonteCarloError, match="domain errors"):
            propagate_monte_carlo(m, heavy, M=10_000, seed=0)

    def test_minimum_sample_count(self):
        m = parse_model("X1")
        joint = gaussian_joint([0.0], [1.0])
        with pytest.raises(ConfigError):
            propagate_monte_carlo(m, joint, M=50, seed=0)

    def test_standard_error_scale(self):
        m = parse_model("X1")
        joint = gaussian_joint([0.0], [1.0])
        r, _ = propagate_monte_carlo(m, joint, M=100_000, seed=0)
        assert r.mc_diagnostics.mc_standard_error == pytest.approx(
            r.u / np.sqrt(100_000), rel=1e-12)

    def test_rectangular_input_quantile_interval(self):
        m = parse_model("X1")
        joint = JointInputModel([InputQuantity("X1", Rectangular(0.0, 1.0))])
        r, _ = propagate_monte_carlo(m, joint, M=1_000_000, seed=6,
                                     coverage=0.95)
        lo, hi = r.interval
        assert lo == pytest.approx(0.025, abs=0.005)
        assert hi == pytest.approx(0.975, abs=0.005)

    def test_constant_model_degenerates(self):
        m = parse_model("5.0", declared=("X1",))
        joint = gaussian_joint([0.0], [1.0])
        r, ecdf = propagate_monte_carlo(m, joint, M=1000, seed=0)
        assert r.y == 5.0 and r.u == 0.0 and r.U == 0.0
        assert r.interval == (5.0, 5.0)
        assert (ecdf.sorted_values == 5.0).all()
        rt = propagate_taylor1(m, joint)
        assert rt.y == 5.0 and rt.u == 0.0 and rt.interval == (5.0, 5.0)


class TestEmpiricalCDF:
    def test_quantile_uses_ceil_ranks(self):
        vals = np.arange(1.0, 101.0)  # 1..100 already sorted
        e = EmpiricalCDF(vals)
        # rank ceil(0.025*100)=3 and ceil(0.975*100)=98, 1-based
        lo = e.quantile(0.025)
        hi = e.quantile(0.975)
        assert lo == 3.0 and hi == 98.0

    def test_cdf_step_function(self):
        e = EmpiricalCDF(np.array([1.0, 2.0, 3.0, 4.0]))
        assert e.cdf(0.5) == 0.0
        assert e.cdf(2.0) == 0.5
        assert e.cdf(10.0) == 1.0

    def test_quantile_bounds_clip(self):
        e = EmpiricalCDF(np.array([5.0, 6.0]))
        assert e.quantile(1e-9) == 5.0
        assert e.quantile(1.0) == 6.0


class TestSummaries:
    def test_summarize_rescales_expanded(self):
        m = parse_model("X1 + X2")
        joint = gaussian_joint([0.0, 0.0], [1.0, 1.0])
        r = propagate_taylor1(m, joint, k=2.0)
        r3 = summarize(r, 3.0)
        assert r3.k == 3.0
        assert r3.U == pytest.approx(3 * r.u, rel=1e-15)
        assert r3.interval == (pytest.approx(-3 * r.u), pytest.approx(3 * r.u))

    def test_summarize_rejects_nonpositive_k(self):
        m = parse_model("X1")
        r = propagate_taylor1(m, gaussian_joint([0.0], [1.0]))
        with pytest.raises(ConfigError):
            summarize(r, 0.0)

    def test_implied_coverage_oracle(self):
        assert implied_coverage(2.0) == pytest.approx(0.9544997361036416,
                                                      abs=1e-15)
        assert implied_coverage(1.959963984540054) == pytest.approx(
            0.95, abs=1e-12)

    def test_budget_rows_sum_to_first_order_variance(self):
        m = parse_model("X1 * X2 + sin(X3)")
        joint = gaussian_joint([2.0, 3.0, 0.5], [0.1, 0.2, 0.05])
        rows = sensitivity_budget(m, joint)
        assert [r["name"] for r in rows] == ["X1", "X2", "X3"]
        total = sum(r["contribution"] for r in rows)
        r1 = propagate_taylor1(m, joint)
        assert total == pytest.approx(r1.u ** 2, rel=1e-12)
