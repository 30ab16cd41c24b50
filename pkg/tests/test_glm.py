"""Likelihood, derivatives and the IRLS engine."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepglm.errors import DataError, NumericalError
from sepglm.glm import (
    FitResult,
    IrlsConfig,
    PoissonObjective,
    fisher_info,
    irls_fit,
    linear_predictor,
    log_likelihood,
    log_likelihood_gap,
    null_directions,
    score,
    spd_solve,
)

from conftest import planted_perfect_design, random_design


def grid_newton_mle(X, y, half_width=4.0, n_grid=41):
    """Brute-force MLE: best point of a dense grid around the origin, then
    plain Newton steps from there (no line search, no jitter)."""
    k = X.shape[1]
    axes = [np.linspace(-half_width, half_width, n_grid)] * k
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    th = pts @ X.T
    ll = th @ y - np.exp(np.minimum(th, 50)).sum(axis=1)
    b = pts[np.argmax(ll)].astype(float)
    for _ in range(100):
        lam = np.exp(X @ b)
        g = X.T @ (y - lam)
        H = (X * lam[:, None]).T @ X
        step = np.linalg.solve(H, g)
        b = b + step
        if np.max(np.abs(step)) < 1e-14:
            break
    return b


def _fd_score(obj, beta, h=1e-6):
    g = np.zeros_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h * max(1.0, abs(beta[j]))
        g[j] = (obj.loglik(beta + e) - obj.loglik(beta - e)) / (2 * e[j])
    return g


def _fd_hessian(obj, beta, h=1e-4):
    k = beta.size
    H = np.zeros((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        H[:, j] = (obj.score(beta + e) - obj.score(beta - e)) / (2 * h)
    return -0.5 * (H + H.T)


class TestLikelihoodExamples:
    def test_zero_count(self):
        obj = PoissonObjective(np.ones((1, 1)), [0])
        assert log_likelihood(obj, [math.log(2.0)]) == pytest.approx(-2.0)

    def test_single_spike(self):
        obj = PoissonObjective(np.ones((1, 1)), [1])
        assert log_likelihood(obj, [0.0]) == pytest.approx(-1.0)

    def test_sentinel_forced_zero_rate(self):
        X = np.array([[1.0, 1.0]])
        assert log_likelihood(PoissonObjective(X, [1]), [0.0, -math.inf]) == -math.inf
        assert log_likelihood(PoissonObjective(X, [0]), [0.0, -math.inf]) == 0.0

    def test_sentinel_rule(self):
        X = np.array([[1.0, 0.0], [1.0, 2.0], [1.0, -3.0]])
        th = linear_predictor(X, np.array([0.5, -math.inf]))
        assert th[0] == 0.5
        assert th[1] == -math.inf and th[2] == -math.inf
        with pytest.raises(NumericalError):
            linear_predictor(X, np.array([0.5, math.inf]))

    def test_score_stationary(self):
        obj = PoissonObjective(np.ones((2, 1)), [1, 3])
        np.testing.assert_allclose(score(obj, [math.log(2.0)]), [0.0], atol=1e-12)

    def test_score_zero_counts(self):
        obj = PoissonObjective(np.ones((2, 1)), [0, 0])
        np.testing.assert_allclose(score(obj, [0.0]), [-2.0])

    def test_fisher_intercept(self):
        obj = PoissonObjective(np.ones((2, 1)), [0, 0])
        np.testing.assert_allclose(fisher_info(obj, [math.log(2.0)]), [[4.0]])

    def test_fisher_zero_column(self):
        X = np.column_stack([np.ones(4), np.zeros(4), np.arange(4.0)])
        F = fisher_info(PoissonObjective(X, [0, 1, 2, 0]), [0.1, 0.3, -0.2])
        assert np.all(F[1] == 0) and np.all(F[:, 1] == 0)

    def test_rate_overflow(self):
        obj = PoissonObjective(np.ones((1, 1)), [1])
        with pytest.raises(NumericalError, match="rate overflow"):
            score(obj, [800.0])

    def test_gap_without_cancellation(self):
        X = np.column_stack([np.ones(3), [0.0, 1.0, 0.0]])
        y = np.array([1e6, 0, 1e6])
        hi = np.array([math.log(1e6), -40.0])
        lo = np.array([math.log(1e6), -39.0])
        gap = log_likelihood_gap(X, y, hi, lo)
        expect = -(math.exp(math.log(1e6) - 40) - math.exp(math.log(1e6) - 39))
        assert gap == pytest.approx(expect, rel=1e-10)


class TestDerivatives:
    @pytest.mark.parametrize("seed", range(5))
    def test_score_matches_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        d = random_design(rng, 80, 3)
        obj = PoissonObjective(d.X, d.y)
        for _ in range(20):
            beta = rng.normal(scale=0.5, size=d.k)
            g, fd = obj.score(beta), _fd_score(obj, beta)
            assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_fisher_matches_numerical_hessian(self, seed):
        rng = np.random.default_rng(seed)
        d = random_design(rng, 80, 4)
        obj = PoissonObjective(d.X, d.y)
        for _ in range(20):
            beta = rng.normal(scale=0.5, size=d.k)
            F, H = obj.fisher(beta), _fd_hessian(obj, beta)
            assert np.linalg.norm(F - H) / np.linalg.norm(H) < 1e-4

    def test_penalised_gradient(self, rng):
        d = random_design(rng, 60, 3)
        P = np.diag([0.0, 2.0, 3.0])
        obj = PoissonObjective(d.X, d.y, penalty=P, weight=0.7)
        beta = np.array([0.2, -0.1, 0.3])
        h = 1e-6
        fd = np.array(
            [(obj.value(beta + h * e) - obj.value(beta - h * e)) / (2 * h) for e in np.eye(3)]
        )
        np.testing.assert_allclose(obj.gradient(beta), fd, rtol=1e-6)


class TestSpdSolve:
    def test_plain(self):
        A = np.array([[4.0, 1.0], [1.0, 3.0]])
        x, jit = spd_solve(A, np.array([1.0, 2.0]))
        np.testing.assert_allclose(A @ x, [1.0, 2.0])
        assert jit == 0.0

    def test_jitter_on_singular(self):
        A = np.array([[1.0, 1.0], [1.0, 1.0]])
        x, jit = spd_solve(A, np.array([1.0, 1.0]))
        assert jit > 0
        assert np.all(np.isfinite(x))

    def test_budget_exhausted(self):
        A = np.array([[1.0, 0.0], [0.0, -1.0]])
        with pytest.raises(NumericalError, match="jitter budget"):
            spd_solve(A, np.ones(2))


class TestIrls:
    def test_intercept_only_closed_form(self):
        fit = irls_fit(PoissonObjective(np.ones((3, 1)), [1, 2, 3]))
        assert fit.converged
        assert fit.beta[0] == pytest.approx(math.log(2.0), abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_grid_newton_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        d = random_design(rng, 50, 2)
        fit = irls_fit(PoissonObjective(d.X, d.y))
        assert fit.converged
        ref = grid_newton_mle(d.X, d.y.astype(float))
        assert np.max(np.abs(fit.beta - ref)) < 1e-6
        assert np.max(np.abs(PoissonObjective(d.X, d.y).score(fit.beta))) < IrlsConfig().score_tol

    def test_planted_perfect_column_diverges(self, rng):
        d, j = planted_perfect_design(rng)
        fit = irls_fit(PoissonObjective(d.X, d.y))
        assert not fit.converged
        assert fit.divergent[j]
        assert fit.beta[j] < -10
        assert not fit.divergent[:j].any()

    def test_flagged_coordinates_decrease_at_the_end(self, rng):
        d, j = planted_perfect_design(rng)
        obj = PoissonObjective(d.X, d.y)
        path = [irls_fit(obj, IrlsConfig(max_iter=m)).beta[j] for m in range(90, 101)]
        assert np.all(np.diff(path) < 0)

    def test_step_halving_trace_non_decreasing(self, rng):
        d, _ = planted_perfect_design(rng)
        fit = irls_fit(PoissonObjective(d.X, d.y), IrlsConfig(step_halving=True))
        assert np.all(np.diff(fit.objective_trace) >= 0)

    def test_degenerate_response(self):
        with pytest.raises(DataError, match="degenerate response"):
            irls_fit(PoissonObjective(np.ones((3, 1)), [0, 0, 0]))

    def test_bad_start(self):
        with pytest.raises(DataError, match="beta0"):
            irls_fit(PoissonObjective(np.ones((3, 1)), [0, 1, 0]), beta0=[math.nan])

    def test_clamp_warning(self):
        obj = PoissonObjective(np.column_stack([np.ones(4), [0, 0, 0, 40.0]]), [0, 1, 0, 1])
        with pytest.warns(RuntimeWarning, match="clamped"):
            fit = irls_fit(obj, IrlsConfig(max_iter=3), beta0=[0.0, 1.0])
        assert fit.info["clamped"]

    def test_collinear_design_flat_direction(self):
        rng = np.random.default_rng(8)
        band = rng.integers(0, 2, 300)
        X = np.column_stack([np.ones(300), band == 0, band == 1]).astype(float)
        y = rng.poisson(np.where(band == 0, 0.5, 2.0))
        obj = PoissonObjective(X, y)
        N = null_directions(obj)
        assert N.shape[1] == 1
        fit = irls_fit(obj)
        assert fit.converged
        assert abs(float(N[:, 0] @ fit.beta)) < 1e-10
        rates = np.exp(X @ fit.beta)
        assert rates[band == 0][0] == pytest.approx(y[band == 0].mean(), rel=1e-10)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            IrlsConfig(max_iter=0)
        with pytest.raises(ValueError):
            IrlsConfig(score_tol=0.0)

    def test_result_covariance_and_sentinels(self):
        fit = FitResult(
            beta=np.array([0.0, -math.inf]), loglik=0.0, fisher=np.eye(1), converged=True,
            iterations=1, objective_trace=[0.0], divergent=np.zeros(2, dtype=bool),
            transform=np.array([[1.0], [0.0]]), info={"undefined_coordinates": [1]},
        )
        C = fit.covariance()
        assert C[0, 0] == 1.0 and np.isnan(C[1, 1])
        assert not fit.finite
        np.testing.assert_array_equal(fit.predict_rate(np.array([[1.0, 0.0], [1.0, 1.0]])), [1.0, 0.0])


class TestIrlsProperties:
    @given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(30, 150))
    @settings(max_examples=25, deadline=None)
    def test_score_small_at_solution(self, seed, k, n):
        rng = np.random.default_rng(seed)
        d = random_design(rng, n, k, scale=0.3)
        obj = PoissonObjective(d.X, d.y)
        try:
            fit = irls_fit(obj)
        except NumericalError:
            return
        if fit.converged:
            assert np.max(np.abs(obj.score(fit.beta))) < IrlsConfig().score_tol
            F = fit.fisher
            np.testing.assert_allclose(F, F.T)
            assert np.min(np.linalg.eigvalsh(F)) >= -1e-8 * np.max(np.abs(F))
