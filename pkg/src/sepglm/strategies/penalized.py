"""Bayesian MAP (Gaussian prior) and ridge-penalised fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..design import GENERIC, HISTORY, STIMULUS, DesignMatrix
from ..errors import ConfigError, NumericalError
from ..glm import FitResult, PoissonObjective, irls_fit
from .base import StrategyConfig, check_response

# 1 - c**2 below this makes the geometric prior numerically singular
MIN_PRIOR_GAP = 1e-10
C_CAP = 0.99999

DEFAULT_C_GRID = (0.0, 0.5, 0.8, 0.9, 0.95, 0.99)
DEFAULT_LAMBDA_GRID = tuple(float(v) for v in np.geomspace(0.01, 0.5, 10))


@dataclass(frozen=True)
class BayesianMap(StrategyConfig):
    """Zero-mean Gaussian prior with one geometric covariance block per group.

    Within a group of ``m`` coefficients ``Sigma[i, j] = scale * c**|i-j|``;
    the intercept is not penalised.
    """

    c: float = 0.9
    groups: tuple = (HISTORY, STIMULUS, GENERIC)
    prior_scale: float = 1.0

    name = "bayesian"
    label = "Bayesian"
    hyperparameter = "c"

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ConfigError(f"c must lie in [0, 1], got {self.c}")
        if not self.prior_scale > 0:
            raise ConfigError("prior_scale must be positive")
        object.__setattr__(self, "groups", tuple(self.groups))
        unknown = set(self.groups) - {HISTORY, STIMULUS, GENERIC}
        if unknown:
            raise ConfigError(f"unknown prior groups {sorted(unknown)}")

    def strength(self, value) -> float:
        # a larger c correlates neighbouring coefficients more tightly
        return float(value) if self.hyperparameter == "c" else -float(value)


@dataclass(frozen=True)
class Ridge(StrategyConfig):
    """Maximise ``(1 - lam) * l(beta) - lam * |beta_{1:}|^2``."""

    lam: float = 0.1

    name = "ridge"
    label = "Ridge"
    hyperparameter = "lam"

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise ConfigError(f"ridge lam must lie in [0, 1), got {self.lam}")

    def strength(self, value) -> float:
        return float(value)


def geometric_precision(m: int, c: float) -> np.ndarray:
    """Inverse of the ``m x m`` matrix ``c**|i-j|`` (tridiagonal in closed form)."""
    if m == 0:
        return np.zeros((0, 0))
    gap = 1.0 - c * c
    if gap < MIN_PRIOR_GAP:
        raise NumericalError(
            f"prior covariance numerically singular for c={c}; use c <= {C_CAP}"
        )
    P = np.zeros((m, m))
    idx = np.arange(m)
    P[idx, idx] = 1.0 + c * c
    P[0, 0] = P[-1, -1] = 1.0
    P[idx[:-1], idx[1:]] = -c
    P[idx[1:], idx[:-1]] = -c
    return P / gap


def prior_precision(d: DesignMatrix, cfg: BayesianMap) -> np.ndarray:
    """Block-diagonal ``Sigma^-1`` in design coordinates."""
    P = np.zeros((d.k, d.k))
    for kind in cfg.groups:
        cols = d.columns_of(kind)
        if cols.size:
            P[np.ix_(cols, cols)] = geometric_precision(cols.size, cfg.c) / cfg.prior_scale
    return P


def ridge_penalty(d: DesignMatrix, lam: float) -> np.ndarray:
    """``P`` with ``0.5 * b'Pb = lam * |b_{1:}|^2`` (intercept unpenalised)."""
    diag = np.full(d.k, 2.0 * lam)
    if d.has_intercept:
        diag[0] = 0.0
    return np.diag(diag)


def fit_bayesian_map(d: DesignMatrix, cfg: BayesianMap = BayesianMap()) -> FitResult:
    """Posterior mode under the grouped geometric prior."""
    check_response(d)
    P = prior_precision(d, cfg)
    fit = irls_fit(PoissonObjective(d.X, d.y, penalty=P), cfg.irls)
    fit.strategy = cfg.name
    return fit


def fit_ridge(d: DesignMatrix, cfg: Ridge = Ridge()) -> FitResult:
    """Ridge fit; ``lam = 0`` reduces to maximum likelihood."""
    check_response(d)
    obj = PoissonObjective(d.X, d.y, penalty=ridge_penalty(d, cfg.lam), weight=1.0 - cfg.lam)
    fit = irls_fit(obj, cfg.irls)
    fit.strategy = cfg.name
    return fit
