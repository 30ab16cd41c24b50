"""Deviance, R and R_CV, effective degrees of freedom, time rescaling,
correlations and the bootstrap."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sepglm import gof
from sepglm.bootstrap import MIN_REPLICATES, bootstrap_ci
from sepglm.data import BinnedSpikeTrain, SimSpec, simulate_spike_train
from sepglm.design import build_design
from sepglm.errors import ConfigError, DataError
from sepglm.strategies import (
    BayesianMap,
    FixedIteration,
    Ridge,
    fit_bayesian_map,
    fit_fixed_iteration,
    fit_ridge,
)

from conftest import P_HIST, Q_BANDS, random_design


class TestDeviance:
    def test_saturated(self):
        y = np.array([0, 2, 5])
        assert gof.deviance(y, y) == 0.0

    def test_single_term(self):
        assert gof.deviance([2], [1.0]) == pytest.approx(2 * (2 * math.log(2) - 1))
        assert gof.deviance([2], [1.0]) == pytest.approx(0.7726, abs=1e-4)

    def test_impossible_event(self):
        assert gof.deviance([1], [0.0]) == math.inf

    def test_negative_rate(self):
        with pytest.raises(DataError):
            gof.deviance([1], [-0.1])

    @given(
        st.lists(st.integers(0, 6), min_size=1, max_size=40),
        st.floats(0.01, 5.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_non_negative(self, y, rate):
        y = np.array(y)
        assert gof.deviance(y, np.full(y.size, rate)) >= 0.0

    def test_null_is_best_constant(self, rng):
        y = rng.poisson(0.7, 200)
        dn = gof.null_deviance(y)
        for r in (0.5, 0.6, 0.8, 1.0):
            assert gof.deviance(y, np.full(y.size, r)) >= dn


class TestDevianceRatio:
    def test_examples(self):
        assert gof.deviance_ratio(3.0, 3.0) == 0.0
        assert gof.deviance_ratio(0.0, 3.0) == 1.0
        assert gof.deviance_ratio(6.0, 3.0) == -1.0
        assert gof.deviance_ratio(math.inf, 3.0) == -math.inf
        assert math.isnan(gof.deviance_ratio(1.0, 0.0))

    def test_describe(self):
        assert gof.describe_R(-math.inf) == "< 0 (unbounded)"
        assert gof.describe_R(math.nan) == "undefined"
        assert gof.describe_R(0.34041) == "0.3404"

    def test_cv_on_training_data_equals_in_sample(self, separated_data):
        train = separated_data.training()
        d = build_design(train, P_HIST, Q_BANDS, role=None)
        r_cv = gof.cross_validated_R(Ridge(lam=0.1), train, train, P_HIST, Q_BANDS)
        fit = fit_ridge(d, Ridge(lam=0.1))
        assert r_cv == pytest.approx(gof.in_sample_R(fit, d), abs=1e-12)

    def test_empty_test_set(self, separated_design):
        fit = fit_ridge(separated_design, Ridge(lam=0.1))
        empty = separated_design.take_rows(np.zeros(0, dtype=int))
        with pytest.raises(DataError, match="empty test set"):
            gof.heldout_R(fit, empty)

    def test_matched_heldout_close_to_in_sample(self):
        beta = np.concatenate([[math.log(0.03)], [-2.0, -1.0, -0.3, 0.1, 0.2], [-0.3, 0.0, 0.3]])
        ts = simulate_spike_train(SimSpec(beta, 5, 3, n_bins=100_000, n_trials=2, seed=21))
        train, test = ts.subset([ts.ids[0]]), ts.subset([ts.ids[1]])
        d = build_design(train, 5, 3, role=None)
        fit = fit_bayesian_map(d, BayesianMap(c=0.9))
        r = gof.in_sample_R(fit, d)
        r_cv = gof.cross_validated_R(BayesianMap(c=0.9), train, test, 5, 3)
        assert abs(r - r_cv) < 0.05


class TestEffectiveDof:
    def test_full_rank_mle_counts_parameters(self, rng):
        d = random_design(rng, 400, 5)
        fit = fit_fixed_iteration(d)
        assert gof.effective_dof(fit, d) == pytest.approx(d.k, abs=1e-6)

    def test_ridge_limit_is_intercept_only(self, rng):
        d = random_design(rng, 400, 5)
        fit = fit_ridge(d, Ridge(lam=1 - 1e-9))
        assert gof.effective_dof(fit, d) == pytest.approx(1.0, abs=1e-4)

    def test_penalties_shrink(self, separated_design):
        d = separated_design
        std = gof.effective_dof(fit_fixed_iteration(d), d)
        for fit in (fit_ridge(d, Ridge(lam=0.1)), fit_bayesian_map(d, BayesianMap(c=0.9))):
            e = gof.effective_dof(fit, d)
            assert 0 < e < std <= d.k

    def test_collinear_direction_not_counted(self):
        rng = np.random.default_rng(8)
        band = rng.integers(0, 2, 300)
        from sepglm.design import DesignMatrix

        X = np.column_stack([band == 0, band == 1]).astype(float)
        y = rng.poisson(np.where(band == 0, 0.5, 2.0))
        d = DesignMatrix.from_arrays(X, y)
        fit = fit_fixed_iteration(d)
        assert gof.effective_dof(fit, d) == pytest.approx(2.0, abs=1e-6)


@pytest.fixture(scope="module")
def separated_design(separated_data):
    return build_design(separated_data, P_HIST, Q_BANDS)


class TestRescaling:
    def test_closed_form(self):
        spikes = BinnedSpikeTrain(0, 0.5, [1, 1, 0, 0, 0, 1])
        u = gof.rescale_times(spikes, np.ones(6))
        np.testing.assert_allclose(u, [1 - math.exp(-0.5), 1 - math.exp(-2.0)])
        np.testing.assert_allclose(u, [0.3935, 0.8647], atol=1e-4)

    def test_no_spikes(self):
        assert gof.rescale_times(BinnedSpikeTrain(0, 0.001, [0, 0, 0]), np.ones(3)).size == 0

    def test_same_bin_spikes(self):
        u = gof.rescale_times(BinnedSpikeTrain(0, 1.0, [0, 2, 0, 1]), np.ones(4))
        np.testing.assert_allclose(u, [0.0, 1 - math.exp(-2.0)])

    def test_rate_validation(self):
        with pytest.raises(DataError):
            gof.rescale_times(BinnedSpikeTrain(0, 1.0, [1, 1]), np.ones(3))
        with pytest.raises(DataError):
            gof.rescale_times(BinnedSpikeTrain(0, 1.0, [1, 1]), [-1.0, 1.0])

    @given(st.lists(st.integers(0, 2), min_size=2, max_size=60), st.floats(0.01, 50.0))
    @settings(max_examples=80, deadline=None)
    def test_values_in_unit_interval(self, counts, rate):
        u = gof.rescale_times(BinnedSpikeTrain(0, 0.01, counts), np.full(len(counts), rate))
        assert u.size == max(sum(counts) - 1, 0)
        assert np.all((u >= 0) & (u <= 1))


class TestKS:
    def test_single_value(self):
        r = gof.ks_analysis([0.5])
        assert r.statistic == pytest.approx(0.5)
        assert r.bound == pytest.approx(1.36)

    @pytest.mark.parametrize("n", [1, 10, 137])
    def test_uniform_grid(self, n):
        u = (np.arange(1, n + 1) - 0.5) / n
        assert gof.ks_analysis(u).statistic == pytest.approx(0.5 / n)

    def test_exact_bound(self):
        r = gof.ks_analysis(np.linspace(0.01, 0.99, 50), exact=True)
        assert r.bound == pytest.approx(stats.kstwo.ppf(0.95, 50))

    def test_errors(self):
        with pytest.raises(DataError):
            gof.ks_analysis([])
        with pytest.raises(DataError):
            gof.ks_analysis([1.5])

    def test_curve(self):
        q, u = gof.ks_curve([0.9, 0.1])
        np.testing.assert_allclose(q, [0.25, 0.75])
        np.testing.assert_allclose(u, [0.1, 0.9])

    def test_calibration(self):
        rng = np.random.default_rng(0)
        rej = np.mean([not gof.ks_analysis(rng.random(1000)).passed for _ in range(500)])
        assert abs(rej - 0.05) <= 0.025


class TestCorrelation:
    def test_orthogonal_design_identity(self):
        from sepglm.design import DesignMatrix

        X = np.kron(np.eye(3), np.ones((20, 1)))
        y = np.tile([0, 1, 2, 3], 15)
        d = DesignMatrix.from_arrays(X, y, intercept=False)
        R = gof.param_correlation(fit_fixed_iteration(d))
        np.testing.assert_allclose(R, np.eye(3), atol=1e-12)

    def test_properties(self, rng):
        d = random_design(rng, 300, 5)
        R = gof.param_correlation(fit_fixed_iteration(d))
        np.testing.assert_array_equal(np.diag(R), np.ones(5))
        np.testing.assert_allclose(R, R.T)
        assert np.all(np.abs(R) <= 1)
        assert np.min(np.linalg.eigvalsh(R)) >= -1e-8

    def test_limit_coordinates_undefined(self, separated_design):
        from sepglm.strategies import fit_ml_limit

        fit = fit_ml_limit(separated_design)
        R = gof.param_correlation(fit)
        j = fit.info["undefined_coordinates"][0]
        assert np.isnan(R[j, j])

    def test_bayesian_neighbouring_lags_positive(self, separated_design):
        d = separated_design
        R = gof.param_correlation(fit_bayesian_map(d, BayesianMap(c=0.9)))
        h = d.history_cols
        near = np.array([R[h[i], h[i + 1]] for i in range(h.size - 1)])
        far = np.array([R[h[i], h[i + 5]] for i in range(h.size - 5)])
        assert np.mean(near > 0) > 0.9
        assert near.mean() > far.mean()


class TestMeasureAndReport:
    def test_measure(self):
        out, secs, peak = gof.measure(lambda n: np.ones(n).sum(), 100_000)
        assert out == 100_000 and secs >= 0 and peak >= 800_000

    def test_report_fields(self, separated_data):
        train, test = separated_data.training(), separated_data.held_out()
        d_train, d_test = gof.split_designs(train, test, P_HIST, Q_BANDS, None)
        ref = fit_fixed_iteration(d_train)
        ref_edof = gof.effective_dof(ref, d_train)
        fit = fit_ridge(d_train, Ridge(lam=0.1))
        rep = gof.gof_report(fit, d_train, d_test, reference_edof=ref_edof)
        assert rep.deviance_model >= 0 and rep.deviance_null >= 0
        assert rep.R <= 1
        assert 0 <= rep.edof <= rep.n_params
        assert rep.edof_ratio == pytest.approx(rep.edof / ref_edof)
        nd = rep.numeric_dict()
        assert "runtime_s" not in nd and set(rep.resource_dict()) == {"runtime_s", "peak_memory_bytes"}


def _structural_trials(seed, n_trials=6):
    beta = np.concatenate([[math.log(0.05)], [-math.inf, -1.0, 0.0], [0.0, 0.2]])
    return simulate_spike_train(SimSpec(beta, 3, 2, n_bins=2000, n_trials=n_trials, seed=seed))


class TestBootstrap:
    def test_too_few_replicates(self):
        with pytest.raises(ConfigError, match="B too small"):
            bootstrap_ci(FixedIteration(), _structural_trials(0), 3, 2, B=1)
        assert MIN_REPLICATES == 50

    def test_needs_two_trials(self):
        with pytest.raises(DataError, match="at least 2 trials"):
            bootstrap_ci(FixedIteration(), _structural_trials(0, n_trials=1), 3, 2, B=50)

    def test_structural_parameter_always_diverges(self):
        s = bootstrap_ci(FixedIteration(), _structural_trials(1), 3, 2, B=50, seed=4, threads=1)
        assert s.divergence_fraction[1] == 1.0
        assert math.isnan(s.lower[1]) and math.isnan(s.upper[1])
        assert not s.defined()[1]
        ok = s.defined()
        assert np.all(s.lower[ok] <= s.upper[ok])
        assert s.to_dict()["parameters"][1]["lower"] is None

    def test_thread_count_irrelevant(self):
        ts = _structural_trials(2)
        a = bootstrap_ci(Ridge(lam=0.1), ts, 3, 2, B=50, seed=9, threads=1)
        b = bootstrap_ci(Ridge(lam=0.1), ts, 3, 2, B=50, seed=9, threads=4)
        np.testing.assert_array_equal(a.replicates, b.replicates)
        np.testing.assert_array_equal(a.lower, b.lower)
