"""Strategy configurations and the unpenalised fits (fixed iteration, ML limit)."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..design import DesignMatrix
from ..errors import ConfigError, DataError
from ..glm import FitResult, IrlsConfig, PoissonObjective, irls_fit, linear_predictor
from ..separation import SeparationReport, detect_separation


@dataclass(frozen=True)
class StrategyConfig:
    """Base for the per-strategy configurations.

    ``hyperparameter`` names the field that cross-validation tunes, if any.
    """

    irls: IrlsConfig = field(default_factory=IrlsConfig)

    name = "strategy"
    label = "Strategy"
    hyperparameter = None

    def with_value(self, value) -> "StrategyConfig":
        if self.hyperparameter is None:
            raise ConfigError(f"strategy {self.name!r} has no tunable hyperparameter")
        return replace(self, **{self.hyperparameter: value})

    def strength(self, value) -> float:
        """Larger means stronger regularization; used to break CV ties."""
        return 0.0

    def to_dict(self) -> dict:
        out = {"name": self.name}
        for f in fields(self):
            if f.name == "irls":
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True)
class FixedIteration(StrategyConfig):
    name = "standard_irls"
    label = "Standard IRLS"


@dataclass(frozen=True)
class MLLimit(StrategyConfig):
    name = "ml_limit"
    label = "Maximum Likelihood Limit"


def check_response(d: DesignMatrix) -> None:
    if not np.any(d.y > 0):
        raise DataError("degenerate response: the design has no spikes")


def fit_fixed_iteration(d: DesignMatrix, cfg: FixedIteration = FixedIteration()) -> FitResult:
    """Plain IRLS stopped at the iteration cap, whatever the separation."""
    check_response(d)
    fit = irls_fit(PoissonObjective(d.X, d.y), cfg.irls)
    fit.strategy = cfg.name
    return fit


def _limit_sign(col: np.ndarray) -> str:
    s = np.sign(col[col != 0]).sum()
    return "-inf" if s >= 0 else "+inf"


def fit_ml_limit(
    d: DesignMatrix, report: SeparationReport | None = None, cfg: MLLimit = MLLimit()
) -> FitResult:
    """Fit without the perfect columns and the rows they predict, then put the
    perfect coefficients at their limit.

    Perfect single columns come back as ``-inf`` (the covariate's sign is in
    ``info["limit_signs"]``).  Members of generated combinations are dropped
    from the fit and left at 0; the combination itself is stored in
    ``limit_combos`` and forces a zero rate wherever it is nonzero.
    """
    check_response(d)
    if report is None:
        report = detect_separation(d)
    k = d.k
    rows = np.ones(d.n, dtype=bool)
    rows[report.predicted_rows] = False
    dropped = set(report.perfect_set)
    keep = np.array([j for j in range(k) if j not in dropped], dtype=int)
    if keep.size == 0 or not rows.any() or not np.any(d.y[rows] > 0):
        raise DataError("reduced design empty after removing perfect predictors")
    Xr = d.X[np.ix_(rows, keep)]
    inner = irls_fit(PoissonObjective(Xr, d.y[rows]), cfg.irls)

    beta = np.zeros(k)
    beta[keep] = inner.beta
    beta[list(report.perfect_columns)] = -np.inf
    T = np.zeros((k, keep.size))
    T[keep, np.arange(keep.size)] = 1.0
    combos = [c.vector(k) for c in report.combos]
    fit = FitResult(
        beta=beta,
        loglik=0.0,
        fisher=inner.fisher,
        converged=inner.converged,
        iterations=inner.iterations,
        objective_trace=inner.objective_trace,
        divergent=np.zeros(k, dtype=bool),
        strategy=cfg.name,
        fit_beta=inner.beta,
        transform=T,
        active_rows=rows,
        limit_combos=combos,
        info=dict(inner.info),
    )
    fit.info["undefined_coordinates"] = sorted(dropped)
    fit.info["limit_signs"] = {
        d.names[j]: _limit_sign(d.X[:, j]) for j in report.perfect_columns
    }
    theta = fit.linear_predictor(d.X)
    lam = np.exp(theta)
    with np.errstate(invalid="ignore"):
        terms = np.where(d.y == 0, 0.0, d.y * theta) - lam
    fit.loglik = float(np.sum(terms))
    return fit


def reduced_linear_predictor(d: DesignMatrix, fit: FitResult) -> np.ndarray:
    return linear_predictor(d.X, fit.beta)
