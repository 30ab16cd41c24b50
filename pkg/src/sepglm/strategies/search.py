"""Constrained IRLS variants: a ball-bounded search and a score-threshold search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ..design import DesignMatrix
from ..errors import ConfigError
from ..glm import FitResult, PoissonObjective, irls_fit, null_directions, spd_solve
from .base import StrategyConfig, check_response

DEFAULT_D_GRID = (-2.0, -3.0, -5.0, -8.0, -12.0)


@dataclass(frozen=True)
class BoundedSearch(StrategyConfig):
    """Keep ``|beta_{1:}|^2 <= r`` with ``r = (k - 1) * d**2``.

    ``d`` is the per-coefficient magnitude treated as effectively infinite;
    the default ``-5`` corresponds to a rate factor of ``e^-5``.
    """

    d: float = -5.0

    name = "bounded_search"
    label = "Bounded Search"
    hyperparameter = "d"

    def __post_init__(self):
        if not np.isfinite(self.d) or self.d == 0:
            raise ConfigError(f"bounded search needs a finite nonzero d, got {self.d}")

    def strength(self, value) -> float:
        return -abs(float(value))


@dataclass(frozen=True)
class ScoreThreshold(StrategyConfig):
    """Update only coordinates whose score exceeds ``tau`` in magnitude."""

    tau: float = 1e-3

    name = "score_threshold"
    label = "Score Threshold"
    hyperparameter = "tau"

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise ConfigError(f"tau must be a finite value >= 0, got {self.tau}")

    def strength(self, value) -> float:
        return float(value)


def ball_radius_sq(d: DesignMatrix, threshold: float) -> float:
    n_free = d.k - 1 if d.has_intercept else d.k
    return n_free * threshold * threshold


def ball_projection(radius_sq: float, start: int):
    """Radial projection of ``beta[start:]`` onto the ball ``|b|^2 <= radius_sq``."""
    radius = np.sqrt(radius_sq)

    def project(beta: np.ndarray) -> np.ndarray:
        b = beta[start:]
        norm = float(np.linalg.norm(b))
        if norm <= radius:
            return beta
        out = beta.copy()
        out[start:] = b * (radius / norm)
        return out

    return project


def ball_subproblem(radius_sq: float, start: int, flat: np.ndarray | None = None):
    """Maximiser of the local quadratic model ``g's - 0.5 s'As`` over the ball.

    If the Newton candidate is feasible it is kept.  Otherwise the solution
    lies on the sphere and solves ``(A + 2 mu D) x = A beta + g`` with
    ``D = diag(0.., 1..)`` for the multiplier ``mu > 0`` at which
    ``|x_{start:}|^2 = radius_sq``; ``mu`` is found by bracketing on
    ``log mu``.

    ``flat`` spans directions with ``X @ v = 0``.  Moving along them leaves
    the likelihood unchanged, so an infeasible point is first moved to the smallest
    constrained norm along them (a closed-form least-squares step).
    """
    radius = np.sqrt(radius_sq)
    if flat is not None and flat.shape[1]:
        Nf = flat[start:]
        pinv = np.linalg.pinv(Nf)

        def shrink(x):
            x = x.copy()
            x -= flat @ (pinv @ x[start:])
            return x
    else:

        def shrink(x):
            return x

    def solve(beta, A, g, candidate):
        solve.multiplier = 0.0
        if np.linalg.norm(candidate[start:]) <= radius:
            return candidate
        candidate = shrink(candidate)
        if np.linalg.norm(candidate[start:]) <= radius:
            return candidate
        D = np.zeros(A.shape[0])
        D[start:] = 1.0
        z = A @ beta + g
        scale = max(float(np.max(np.abs(np.diag(A)))), 1.0)

        def x_of(log_mu):
            M = A + np.diag(2.0 * np.exp(log_mu) * D)
            return shrink(spd_solve(M, z)[0])

        def excess(log_mu):
            return float(np.linalg.norm(x_of(log_mu)[start:])) - radius

        lo, hi = np.log(scale) - 25.0, np.log(scale)
        while excess(hi) > 0:
            lo, hi = hi, hi + 5.0
        if excess(lo) > 0:
            lo = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        solve.multiplier = float(np.exp(lo))
        return x_of(lo)

    solve.multiplier = 0.0
    return solve


def fit_bounded_search(d: DesignMatrix, cfg: BoundedSearch = BoundedSearch()) -> FitResult:
    """IRLS restricted to the ball.

    Each step maximises the quadratic model inside the ball; a final radial
    projection removes round-off so every iterate is feasible.
    """
    check_response(d)
    r = ball_radius_sq(d, cfg.d)
    project = ball_projection(r, 1 if d.has_intercept else 0)
    start = 1 if d.has_intercept else 0
    obj = PoissonObjective(d.X, d.y)
    sub = ball_subproblem(r, start, null_directions(obj))
    fit = irls_fit(obj, cfg.irls, project=project, constrain=sub)
    fit.strategy = cfg.name
    fit.info["radius_sq"] = r
    fit.info["constraint_active"] = bool(np.sum(fit.beta[start:] ** 2) >= r * (1 - 1e-9))
    if fit.info["constraint_active"]:
        # one more subproblem at the solution gives the KKT multiplier; the
        # active ball then acts locally like a ridge term 2 mu on beta_{start:}
        A = fit.fisher
        g = obj.gradient(fit.beta, clamp=True)
        sub(fit.beta, A, g, fit.beta + spd_solve(A, g)[0])
        D = np.zeros(d.k)
        D[start:] = 2.0 * sub.multiplier
        fit.fisher = A + np.diag(D)
        fit.penalty = np.diag(D)
    fit.info["multiplier"] = sub.multiplier if fit.info["constraint_active"] else 0.0
    return fit


def fit_score_threshold(d: DesignMatrix, cfg: ScoreThreshold = ScoreThreshold()) -> FitResult:
    """IRLS that freezes, iteration by iteration, coordinates with ``|U_j| <= tau``."""
    check_response(d)
    fit = irls_fit(PoissonObjective(d.X, d.y), cfg.irls, freeze_tol=cfg.tau)
    fit.strategy = cfg.name
    return fit
