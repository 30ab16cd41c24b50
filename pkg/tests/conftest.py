"""Shared fixtures and small data builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from sepglm.data import SimSpec, simulate_spike_train
from sepglm.design import DesignMatrix

# history shape used by the separated scenarios: an absolute refractory
# lag 1 (structural perfect predictor), relative refractoriness at lags 2-3,
# then a slowly decaying excitatory tail whose long lags are rarely
# populated (sampling perfect predictors)
P_HIST, Q_BANDS = 50, 5


def separated_beta(p: int = P_HIST, rate: float = 0.01) -> np.ndarray:
    hist = np.concatenate([[-np.inf, -3.0, -1.0], 0.5 * np.exp(-np.arange(4, p + 1) / 8.0)])
    return np.concatenate([[np.log(rate)], hist, [-0.6, -0.3, 0.0, 0.3, 0.6]])


def separated_trials(seed: int, n_trials: int = 6, n_bins: int = 3000, p: int = P_HIST):
    spec = SimSpec(separated_beta(p), p, Q_BANDS, n_bins=n_bins, n_trials=n_trials, seed=seed)
    return simulate_spike_train(spec)


def random_design(rng: np.random.Generator, n: int, k: int, scale: float = 0.5) -> DesignMatrix:
    """Well-conditioned Poisson design with an intercept and ``k - 1`` covariates."""
    while True:
        Z = rng.normal(size=(n, k - 1))
        beta = np.concatenate([[np.log(2.0)], rng.normal(scale=scale, size=k - 1)])
        X = np.column_stack([np.ones(n), Z])
        y = rng.poisson(np.exp(X @ beta))
        if y.sum() > 0:
            return DesignMatrix.from_arrays(Z, y)


def planted_perfect_design(rng: np.random.Generator, n: int = 200) -> tuple[DesignMatrix, int]:
    """Design whose last column is nonzero only on rows with ``y == 0``."""
    Z = rng.normal(size=(n, 2))
    y = rng.poisson(np.exp(0.5 + 0.3 * Z[:, 0] - 0.2 * Z[:, 1]))
    zero_rows = np.nonzero(y == 0)[0]
    col = np.zeros(n)
    col[zero_rows[: max(3, zero_rows.size // 2)]] = 1.0
    d = DesignMatrix.from_arrays(np.column_stack([Z, col]), y)
    return d, 3


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def separated_data():
    """Five training trials and one held-out trial of the separated scenario."""
    trials = separated_trials(seed=2)
    return trials.with_roles(trials.ids[:5], trials.ids[5:])
