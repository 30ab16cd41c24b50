"""Estimation strategies for designs with perfect predictors.

Every strategy is described by a frozen config object and fitted with
:func:`fit_strategy`, which returns a :class:`~sepglm.glm.FitResult` in the
original design coordinates.
"""

from __future__ import annotations

from dataclasses import fields

from ..design import DesignMatrix
from ..errors import ConfigError
from ..glm import FitResult, IrlsConfig
from ..separation import SeparationReport
from .base import FixedIteration, MLLimit, StrategyConfig, fit_fixed_iteration, fit_ml_limit
from .penalized import (
    DEFAULT_C_GRID,
    DEFAULT_LAMBDA_GRID,
    BayesianMap,
    Ridge,
    fit_bayesian_map,
    fit_ridge,
    geometric_precision,
    prior_precision,
)
from .search import (
    DEFAULT_D_GRID,
    BoundedSearch,
    ScoreThreshold,
    fit_bounded_search,
    fit_score_threshold,
)
from .selection import make_folds, select_hyperparameter
from .spline import (
    DEFAULT_KNOT_GRID,
    SplineBasis,
    SplineBasisSpec,
    build_spline_basis,
    fit_spline,
    regular_knots,
    spline_transform,
    tension_matrix,
)

STRATEGIES = {
    cls.name: cls
    for cls in (FixedIteration, MLLimit, BayesianMap, Ridge, SplineBasis, BoundedSearch, ScoreThreshold)
}

DEFAULT_GRIDS = {
    "ridge": DEFAULT_LAMBDA_GRID,
    "bayesian": DEFAULT_C_GRID,
    "spline": DEFAULT_KNOT_GRID,
    "bounded_search": DEFAULT_D_GRID,
}

# the six strategies compared side by side; the score threshold is an extra
COMPARISON = ("standard_irls", "ml_limit", "bayesian", "ridge", "spline", "bounded_search")


def fit_strategy(
    config: StrategyConfig, d: DesignMatrix, report: SeparationReport | None = None
) -> FitResult:
    """Dispatch to the fitting function of ``config``'s strategy."""
    if isinstance(config, MLLimit):
        return fit_ml_limit(d, report, config)
    if isinstance(config, SplineBasis):
        return fit_spline(d, config, report)
    for cls, fn in (
        (FixedIteration, fit_fixed_iteration),
        (BayesianMap, fit_bayesian_map),
        (Ridge, fit_ridge),
        (BoundedSearch, fit_bounded_search),
        (ScoreThreshold, fit_score_threshold),
    ):
        if isinstance(config, cls):
            return fn(d, config)
    raise ConfigError(f"unknown strategy config {type(config).__name__}")


def strategy_from_dict(spec: dict, irls: IrlsConfig | None = None, where: str = "strategy"):
    """Build a config from ``{"name": ..., <params>}``; unknown keys are errors."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(f"{where}: expected an object with a 'name' key")
    name = spec["name"]
    if name not in STRATEGIES:
        raise ConfigError(f"{where}.name: unknown strategy {name!r}; choose from {sorted(STRATEGIES)}")
    cls = STRATEGIES[name]
    allowed = {f.name for f in fields(cls)} - {"irls"}
    params = {key: v for key, v in spec.items() if key != "name"}
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown parameter(s) {sorted(extra)} for strategy {name!r}")
    if irls is not None:
        params["irls"] = irls
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


__all__ = [
    "BayesianMap",
    "BoundedSearch",
    "COMPARISON",
    "DEFAULT_GRIDS",
    "FixedIteration",
    "MLLimit",
    "Ridge",
    "STRATEGIES",
    "ScoreThreshold",
    "SplineBasis",
    "SplineBasisSpec",
    "StrategyConfig",
    "build_spline_basis",
    "fit_bayesian_map",
    "fit_bounded_search",
    "fit_fixed_iteration",
    "fit_ml_limit",
    "fit_ridge",
    "fit_score_threshold",
    "fit_spline",
    "fit_strategy",
    "geometric_precision",
    "make_folds",
    "prior_precision",
    "regular_knots",
    "select_hyperparameter",
    "spline_transform",
    "strategy_from_dict",
    "tension_matrix",
]
