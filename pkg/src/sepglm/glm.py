"""Poisson log-link likelihood and the IRLS (Newton/Fisher scoring) engine.

For the canonical log link the observed and expected information coincide,
so IRLS here is exactly Newton's method on

    l(beta) = sum_i y_i * theta_i - exp(theta_i),   theta = X @ beta

(the constant ``-log(y_i!)`` is dropped everywhere).  Strategies add a
quadratic penalty ``0.5 * beta' P beta`` and/or down-weight the likelihood by
a factor ``w``; the engine then maximises ``w * l(beta) - 0.5 * beta' P beta``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import DataError, NumericalError

log = logging.getLogger(__name__)

THETA_CLAMP = 30.0
OVERFLOW_THETA = 700.0
JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
# squared Cholesky pivot below this fraction of max(diag) counts as a failed factorization
NEAR_SINGULAR = 1e-10
START_EPS = 1e-8


def linear_predictor(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``X @ beta`` with ``-inf`` coefficients applied by the sentinel rule.

    A ``-inf`` coefficient contributes 0 on rows where its column is zero and
    sends the row to ``-inf`` otherwise, whatever the sign of the covariate.
    """
    beta = np.asarray(beta, dtype=float)
    if np.any(np.isposinf(beta)) or np.any(np.isnan(beta)):
        raise NumericalError("coefficients must be finite or -inf")
    sentinel = np.isneginf(beta)
    if not sentinel.any():
        return X @ beta
    theta = X[:, ~sentinel] @ beta[~sentinel]
    forced = np.any(X[:, sentinel] != 0, axis=1)
    theta[forced] = -np.inf
    return theta


def poisson_loglik_terms(y: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Per-row ``y*theta - exp(theta)``; rows with theta=-inf give 0 or -inf."""
    lam = np.exp(theta)
    with np.errstate(invalid="ignore"):
        yt = np.where(y == 0, 0.0, y * theta)
    return yt - lam


def log_likelihood_gap(X, y, beta_hi, beta_lo, combos_hi=(), combos_lo=()) -> float:
    """``l(beta_hi) - l(beta_lo)`` summed row by row without cancellation.

    The difference of two large totals loses everything below ~1e-13 of
    their size; this form keeps differences caused by nearly-zero rates.
    """
    th_hi = _apply_combos(X, linear_predictor(X, beta_hi), combos_hi)
    th_lo = _apply_combos(X, linear_predictor(X, beta_lo), combos_lo)
    lam_hi, lam_lo = np.exp(th_hi), np.exp(th_lo)
    with np.errstate(invalid="ignore"):
        dtheta = np.where(y == 0, 0.0, y * (th_hi - th_lo))
    if np.any(np.isnan(dtheta)):
        dtheta = np.where(np.isnan(dtheta), 0.0, dtheta)
    finite = np.isfinite(th_hi) & np.isfinite(th_lo)
    # -(lam_hi - lam_lo) = lam_hi * expm1(th_lo - th_hi) where both are finite
    drate = np.where(finite, lam_hi * np.expm1(np.where(finite, th_lo - th_hi, 0.0)), lam_lo - lam_hi)
    return math.fsum(dtheta) + math.fsum(drate)


def _apply_combos(X, theta, combos, tol: float = 1e-9) -> np.ndarray:
    if not len(combos):
        return theta
    theta = np.array(theta, dtype=float)
    for a in combos:
        v = X @ a
        theta[np.abs(v) > tol * max(1.0, np.abs(v).max())] = -np.inf
    return theta


# ---------------------------------------------------------------------------
# linear algebra


def spd_solve(A: np.ndarray, b: np.ndarray, ladder=JITTER_LADDER):
    """Solve ``A x = b`` for symmetric PSD ``A`` by Cholesky.

    A factorization that fails, or whose smallest squared pivot is below
    ``NEAR_SINGULAR * max(diag(A))``, is retried with diagonal jitter
    ``rel * max(diag(A))`` for each ``rel`` in ``ladder``.  Returns
    ``(x, jitter)``.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros_like(b, dtype=float), 0.0
    scale = float(np.max(np.diag(A)))
    if not np.isfinite(scale):
        raise NumericalError("information matrix is not finite")
    if scale <= 0:
        scale = 1.0
    for rel in (0.0,) + tuple(ladder):
        M = A if rel == 0.0 else A + (rel * scale) * np.eye(A.shape[0])
        try:
            c, low = linalg.cho_factor(M, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        piv = np.diag(c)
        if not np.all(np.isfinite(piv)):
            continue
        if rel == 0.0 and np.min(piv) ** 2 < NEAR_SINGULAR * scale:
            continue
        return linalg.cho_solve((c, low), b, check_finite=False), rel * scale
    raise NumericalError(
        f"information matrix singular beyond the jitter budget ({ladder[-1]:g} x max diag)"
    )


def spd_inverse(A: np.ndarray, ladder=JITTER_LADDER):
    x, jitter = spd_solve(A, np.eye(A.shape[0]), ladder)
    return 0.5 * (x + x.T), jitter


# ---------------------------------------------------------------------------
# objective


class PoissonObjective:
    """Penalised Poisson log-likelihood ``w * l(beta) - 0.5 * beta' P beta``."""

    def __init__(self, X, y, penalty=None, weight: float = 1.0):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DataError("X must be n x k and y of length n")
        if self.X.shape[0] < 1:
            raise DataError("design has no rows")
        k = self.X.shape[1]
        self.penalty = None if penalty is None else np.asarray(penalty, dtype=float)
        if self.penalty is not None and self.penalty.shape != (k, k):
            raise DataError(f"penalty must be {k} x {k}")
        self.weight = float(weight)
        self.clamped = False

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def theta(self, beta, clamp: bool = False) -> np.ndarray:
        th = self.X @ beta
        if clamp:
            over = th > THETA_CLAMP
            if over.any():
                if not self.clamped:
                    warnings.warn(
                        f"linear predictor clamped at {THETA_CLAMP} in {int(over.sum())} rows",
                        RuntimeWarning,
                        stacklevel=3,
                    )
                self.clamped = True
                th = np.minimum(th, THETA_CLAMP)
        elif np.any(th > OVERFLOW_THETA) or not np.all(np.isfinite(th)):
            bad = float(np.nanmax(th))
            raise NumericalError(f"rate overflow: linear predictor reached {bad:.6g}")
        return th

    def rates(self, beta, clamp: bool = False) -> np.ndarray:
        return np.exp(self.theta(beta, clamp))

    def loglik(self, beta) -> float:
        th = linear_predictor(self.X, beta)
        return float(np.sum(poisson_loglik_terms(self.y, th)))

    def score(self, beta, clamp: bool = False) -> np.ndarray:
        return self.X.T @ (self.y - self.rates(beta, clamp))

    def fisher(self, beta, clamp: bool = False) -> np.ndarray:
        lam = self.rates(beta, clamp)
        F = (self.X * lam[:, None]).T @ self.X
        return 0.5 * (F + F.T)

    def _pen(self, beta) -> float:
        return 0.0 if self.penalty is None else 0.5 * float(beta @ self.penalty @ beta)

    def value(self, beta, clamp: bool = False) -> float:
        th = self.theta(beta, clamp)
        ll = float(np.sum(poisson_loglik_terms(self.y, th)))
        return self.weight * ll - self._pen(beta)

    def gradient(self, beta, clamp: bool = False) -> np.ndarray:
        g = self.weight * self.score(beta, clamp)
        if self.penalty is not None:
            g = g - self.penalty @ beta
        return g

    def information(self, beta, clamp: bool = False) -> np.ndarray:
        A = self.weight * self.fisher(beta, clamp)
        if self.penalty is not None:
            A = A + self.penalty
        return A


def log_likelihood(obj: PoissonObjective, beta) -> float:
    return obj.loglik(beta)


def score(obj: PoissonObjective, beta) -> np.ndarray:
    return obj.score(np.asarray(beta, dtype=float))


def fisher_info(obj: PoissonObjective, beta) -> np.ndarray:
    return obj.fisher(np.asarray(beta, dtype=float))


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class IrlsConfig:
    max_iter: int = 100
    score_tol: float = 1e-8
    step_tol: float = 1e-8
    step_halving: bool = False
    max_halvings: int = 40
    divergence_streak: int = 10
    divergence_magnitude: float = 5.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.score_tol > 0 and self.step_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class FitResult:
    """Outcome of one fit, in original design coordinates.

    ``beta`` may contain ``-inf`` sentinels.  ``fisher`` is the information
    matrix of the objective that was actually maximised, expressed in the
    fitted coordinates ``fit_beta``; ``transform`` maps those to ``beta``
    (``None`` means identity) and ``active_rows`` marks the design rows the
    fit used (``None`` means all).
    """

    beta: np.ndarray
    loglik: float
    fisher: np.ndarray
    converged: bool
    iterations: int
    objective_trace: list
    divergent: np.ndarray
    strategy: str = "irls"
    fit_beta: np.ndarray | None = None
    transform: np.ndarray | None = None
    active_rows: np.ndarray | None = None
    penalty: np.ndarray | None = None
    weight: float = 1.0
    limit_combos: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fit_beta is None:
            self.fit_beta = self.beta

    @property
    def n_params(self) -> int:
        return int(self.beta.size)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.beta))) and not self.limit_combos

    def linear_predictor(self, X) -> np.ndarray:
        return _apply_combos(X, linear_predictor(X, self.beta), self.limit_combos)

    def predict_rate(self, X) -> np.ndarray:
        """Expected count per bin for each row of ``X``."""
        return np.exp(self.linear_predictor(np.asarray(X, dtype=float)))

    def covariance(self) -> np.ndarray:
        """Inverse information mapped to the original coordinates.

        Coordinates that the fit left undefined (limit coefficients) are NaN.
        """
        inv, _ = spd_inverse(self.fisher)
        if self.transform is not None:
            inv = self.transform @ inv @ self.transform.T
        undefined = list(self.info.get("undefined_coordinates", ()))
        if undefined:
            inv[undefined, :] = np.nan
            inv[:, undefined] = np.nan
        return inv

    def fitted_design(self, X) -> np.ndarray:
        """``X`` restricted to the fit's rows and mapped to fitted coordinates."""
        X = np.asarray(X, dtype=float)
        if self.active_rows is not None:
            X = X[self.active_rows]
        if self.transform is not None:
            X = X @ self.transform
        return X


def default_start(X, y) -> np.ndarray:
    beta0 = np.zeros(X.shape[1])
    if X.shape[1] and np.all(X[:, 0] == 1.0):
        beta0[0] = math.log(float(np.mean(y)) + START_EPS)
    return beta0


def null_directions(obj: PoissonObjective, rel_tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of directions that change neither ``X @ beta`` nor the penalty."""
    G = obj.X.T @ obj.X
    if obj.penalty is not None:
        G = G + obj.penalty
    w, V = linalg.eigh(0.5 * (G + G.T))
    if w.size == 0 or w[-1] <= 0:
        return np.zeros((obj.k, 0))
    return V[:, w <= rel_tol * w[-1]]


def irls_fit(
    obj: PoissonObjective,
    cfg: IrlsConfig = IrlsConfig(),
    beta0=None,
    *,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    constrain: Callable | None = None,
    freeze_tol: float = 0.0,
) -> FitResult:
    """Maximise the objective by Newton/IRLS steps ``beta += A^-1 g``.

    Converged means ``max|g| < score_tol`` together with a last step below
    ``step_tol``; under separation the score of a perfect coordinate decays
    to zero while the coordinate keeps moving, so the step condition is what
    keeps such fits from being reported as converged.

    ``constrain(beta, A, g, candidate)`` may replace the Newton candidate by
    the maximiser of the local quadratic model over a feasible set, and
    ``project`` is applied to every candidate iterate (bounded search); if
    either changed the final iterate the score condition is waived.  With
    ``freeze_tol > 0`` coordinates whose ``|g_j| <= freeze_tol`` sit out the
    iteration (score-threshold search).
    """
    X, y = obj.X, obj.y
    k = obj.k
    if not np.any(y > 0):
        raise DataError("degenerate response: no spikes in the fitted rows")
    beta = default_start(X, y) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (k,) or not np.all(np.isfinite(beta)):
        raise DataError("beta0 must be a finite vector with one entry per column")
    # steps along exact flat directions (collinear columns) carry only
    # amplified round-off from the jittered solve, so they are removed
    null = null_directions(obj)

    def flat_free(v):
        return v - null @ (null.T @ v) if null.shape[1] else v

    beta = flat_free(beta)
    if project is not None:
        beta = project(beta)

    f = obj.value(beta, clamp=True)
    trace = [f]
    streak = np.zeros(k, dtype=int)
    last_dir = np.zeros(k)
    info = {"flat_directions": int(null.shape[1]), "max_jitter": 0.0, "objective_decreases": 0, "halvings": 0, "status": "max_iter"}
    if project is not None:
        info["iterate_norms_sq"] = []
    converged = False
    iterations = 0
    g = obj.gradient(beta, clamp=True)

    for it in range(1, cfg.max_iter + 1):
        active = np.ones(k, dtype=bool)
        if freeze_tol > 0:
            active = np.abs(g) > freeze_tol
            if not active.any():
                info["status"] = "all_frozen"
                break
        A = obj.information(beta, clamp=True)
        step = np.zeros(k)
        try:
            if active.all():
                step, jitter = spd_solve(A, g)
            else:
                sub, jitter = spd_solve(A[np.ix_(active, active)], g[active])
                step[active] = sub
        except NumericalError as exc:
            raise NumericalError(
                f"numerically unstable region at iteration {it}: {exc}"
            ) from exc
        info["max_jitter"] = max(info["max_jitter"], jitter)
        step = flat_free(step)

        projected = False
        new = beta + step
        if constrain is not None:
            cand = constrain(beta, A, g, new)
            projected = cand is not new
            new = cand
            step = new - beta
        if project is not None:
            cand = project(new)
            projected = projected or not np.array_equal(cand, new)
            new = cand
        f_new = obj.value(new, clamp=True)
        if cfg.step_halving:
            h = 0
            while not f_new >= f and h < cfg.max_halvings:
                step = 0.5 * step
                new = beta + step
                if project is not None:
                    new = project(new)
                f_new = obj.value(new, clamp=True)
                h += 1
            info["halvings"] += h
            if not f_new >= f:
                new, f_new = beta, f
        elif f_new < f:
            info["objective_decreases"] += 1
            log.debug("objective decreased at iteration %d: %.17g -> %.17g", it, f, f_new)

        moved = new - beta
        direction = np.sign(moved)
        same = (direction == last_dir) & (direction != 0)
        streak = np.where(same, streak + 1, np.where(direction != 0, 1, 0))
        last_dir = direction

        beta, f = new, f_new
        trace.append(f)
        if project is not None:
            info["iterate_norms_sq"].append(float(np.sum(beta[1:] ** 2)))
        iterations = it
        g = obj.gradient(beta, clamp=True)
        if np.max(np.abs(moved)) < cfg.step_tol and (
            projected or np.max(np.abs(g)) < cfg.score_tol
        ):
            converged = True
            info["status"] = "converged"
            break

    divergent = (streak >= cfg.divergence_streak) & (np.abs(beta) > cfg.divergence_magnitude)
    if freeze_tol > 0 and info["status"] != "all_frozen":
        if not np.any(np.abs(g) > freeze_tol):
            info["status"] = "all_frozen"
    info["final_score_inf"] = float(np.max(np.abs(g))) if k else 0.0
    info["clamped"] = obj.clamped
    return FitResult(
        beta=beta.copy(),
        loglik=obj.loglik(beta),
        fisher=obj.information(beta, clamp=True),
        converged=converged,
        iterations=iterations,
        objective_trace=trace,
        divergent=divergent,
        penalty=obj.penalty,
        weight=obj.weight,
        info=info,
    )
