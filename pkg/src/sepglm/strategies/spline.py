"""Cardinal-spline reparameterisation of coefficient groups.

A group of ``p`` coefficients indexed ``1..p`` is written as ``beta = S @ b``
where ``S`` (``p x n``) evaluates ``n`` cardinal-spline basis functions at the
integer indices.  The knots are ``z_0 < 1 = z_1 < ... < z_{n-2} = p < z_{n-1}``.
Between knots ``z_i <= j < z_{i+1}`` with ``a = (j - z_i) / (z_{i+1} - z_i)``
the four nonzero weights of row ``j`` sit at columns ``i-1 .. i+2`` and are
``[1, a, a^2, a^3] @ M(t)``; at ``a = 0`` they are ``(0, 1, 0, 0)``, so the
curve passes through ``b_i`` at each knot.  ``t = 0.5`` is the Catmull-Rom
spline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..design import GENERIC, HISTORY, STIMULUS, ColumnMeta, DesignMatrix
from ..errors import ConfigError
from ..glm import FitResult, PoissonObjective, irls_fit
from ..separation import SeparationReport, detect_separation
from .base import StrategyConfig, check_response

DEFAULT_KNOT_GRID = tuple(range(5, 41, 5))


def tension_matrix(t: float) -> np.ndarray:
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-t, 0.0, t, 0.0],
            [2.0 * t, t - 3.0, 3.0 - 2.0 * t, -t],
            [-t, 2.0 - t, t - 2.0, t],
        ]
    )


@dataclass(frozen=True, eq=False)
class SplineBasisSpec:
    p: int
    knots: np.ndarray
    tension: float
    S: np.ndarray

    @property
    def n_basis(self) -> int:
        return self.S.shape[1]

    def interval(self, lag: int) -> tuple[float, float]:
        """Knot interval ``[z_i, z_{i+1})`` containing ``lag``."""
        i = int(np.searchsorted(self.knots, lag, side="right")) - 1
        i = min(i, self.knots.size - 3)
        return float(self.knots[i]), float(self.knots[i + 1])

    def support(self, col: int) -> np.ndarray:
        """1-based indices where basis function ``col`` is nonzero."""
        return np.nonzero(self.S[:, col])[0] + 1


def _check_knots(p: int, knots: np.ndarray) -> None:
    if p < 1:
        raise ConfigError("a spline group needs p >= 1 coefficients")
    if knots.ndim != 1 or knots.size < 4:
        raise ConfigError("need at least 4 knots")
    if not np.all(np.isfinite(knots)) or np.any(np.diff(knots) <= 0):
        raise ConfigError("knots must be finite and strictly increasing")
    if knots[1] != 1 or knots[-2] != p:
        raise ConfigError(
            f"knot rule violated: second knot must be 1 and second-to-last must be p={p}; "
            f"got {knots[1]:g} and {knots[-2]:g}"
        )


def build_spline_basis(p: int, knots, t: float = 0.5) -> SplineBasisSpec:
    """Evaluate the basis at ``j = 1..p``; see the module docstring."""
    knots = np.asarray(knots, dtype=float)
    _check_knots(p, knots)
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"tension must lie in [0, 1], got {t}")
    M = tension_matrix(t)
    n = knots.size
    S = np.zeros((p, n))
    for j in range(1, p + 1):
        i = int(np.searchsorted(knots, j, side="right")) - 1
        if i < 1 or i > n - 2:
            raise ConfigError(f"index {j} is not covered by the knots")
        a = (j - knots[i]) / (knots[i + 1] - knots[i])
        w = np.array([1.0, a, a * a, a * a * a]) @ M
        for m, col in enumerate(range(i - 1, i + 3)):
            if 0 <= col < n:
                S[j - 1, col] = w[m]
            elif w[m] != 0.0:
                raise ConfigError(f"index {j} needs a basis column beyond the knots")
    return SplineBasisSpec(p, knots, float(t), S)


def regular_knots(p: int, n_knots: int) -> np.ndarray:
    """``n_knots`` equally spaced knots with ``1`` and ``p`` second and second-last."""
    if n_knots < 4:
        raise ConfigError("need at least 4 knots")
    if p < 2:
        raise ConfigError("regular knots need p >= 2")
    if n_knots - 2 > p:
        raise ConfigError(f"at most p+2 = {p + 2} knots fit at integer spacing")
    inner = np.linspace(1.0, float(p), n_knots - 2)
    h = inner[1] - inner[0]
    return np.concatenate([[1.0 - h], inner, [p + h]])


@dataclass(frozen=True)
class SplineBasis(StrategyConfig):
    """Spline bases for the history and/or stimulus coefficient groups.

    Each group takes either a knot count (regular knots) or an explicit knot
    sequence; ``None`` leaves that group unconstrained.
    """

    history_knots: object = 10
    stimulus_knots: object = None
    tension: float = 0.5

    name = "spline"
    label = "Cubic Spline"
    hyperparameter = "history_knots"

    def __post_init__(self):
        if not 0.0 <= self.tension <= 1.0:
            raise ConfigError(f"tension must lie in [0, 1], got {self.tension}")
        for fld in ("history_knots", "stimulus_knots"):
            v = getattr(self, fld)
            if isinstance(v, list):
                object.__setattr__(self, fld, tuple(float(x) for x in v))

    def strength(self, value) -> float:
        # fewer knots means a stiffer curve
        return -float(value) if np.isscalar(value) else -float(len(value))

    def spec_for(self, size: int, knots) -> SplineBasisSpec | None:
        if knots is None:
            return None
        if np.isscalar(knots):
            knots = regular_knots(size, int(knots))
        return build_spline_basis(size, knots, self.tension)


def _knot_rule(group: str, spec: SplineBasisSpec, perfect_lags: set) -> None:
    z = spec.knots
    for i in range(1, z.size - 2):
        lo, hi = z[i], z[i + 1]
        lags = range(int(np.ceil(lo)), int(np.floor(hi)) + 1)
        if lags and all(j in perfect_lags for j in lags):
            raise ConfigError(
                f"spline basis does not break separation: every {group} index in the knot "
                f"interval [{lo:g}, {hi:g}] is a perfect predictor"
            )


def spline_transform(d: DesignMatrix, history=None, stimulus=None):
    """``(T, specs)`` with ``beta = T @ b``; empty basis columns are removed."""
    blocks = []
    specs = {}
    for kind, spec in ((HISTORY, history), (STIMULUS, stimulus)):
        cols = d.columns_of(kind)
        if spec is not None:
            if spec.p != cols.size:
                raise ConfigError(f"{kind} basis built for {spec.p} indices, design has {cols.size}")
            specs[kind] = (cols, spec)
    k = d.k
    for j in range(k):
        kind = d.columns[j].kind
        if kind in specs:
            continue
        e = np.zeros((k, 1))
        e[j, 0] = 1.0
        blocks.append((j, e, None))
    for kind, (cols, spec) in specs.items():
        B = np.zeros((k, spec.n_basis))
        B[cols, :] = spec.S
        blocks.append((int(cols[0]), B, kind))
    blocks.sort(key=lambda b: b[0])
    T = np.hstack([b[1] for b in blocks])
    owners = []
    for _, B, kind in blocks:
        owners += [kind] * B.shape[1]
    nonempty = np.any(T != 0, axis=0)
    return T[:, nonempty], [o for o, keep in zip(owners, nonempty) if keep], specs


def fit_spline(
    d: DesignMatrix,
    cfg: SplineBasis = SplineBasis(),
    report: SeparationReport | None = None,
) -> FitResult:
    """Fit the spline coefficients ``b`` on ``X @ T`` and map back ``beta = T b``."""
    check_response(d)
    history = cfg.spec_for(d.history_cols.size, cfg.history_knots) if d.history_cols.size else None
    stimulus = cfg.spec_for(d.stimulus_cols.size, cfg.stimulus_knots) if d.stimulus_cols.size else None
    if report is None:
        report = detect_separation(d)
    perfect = set(report.perfect_columns)
    for kind, spec in ((HISTORY, history), (STIMULUS, stimulus)):
        if spec is None:
            continue
        cols = d.columns_of(kind)
        lags = {pos + 1 for pos, j in enumerate(cols) if j in perfect}
        _knot_rule(kind, spec, lags)

    T, owners, specs = spline_transform(d, history, stimulus)
    Xt = d.X @ T
    # the intercept column passes through the transform unchanged
    metas = tuple(
        ColumnMeta.intercept() if (j == 0 and d.has_intercept) else ColumnMeta(GENERIC, f"b{j}")
        for j in range(T.shape[1])
    )
    td = DesignMatrix(Xt, d.y, metas, d.row_trial, d.row_bin)
    still = detect_separation(td)
    if still.separated:
        j = (still.perfect_columns or still.combos[0].columns)[0]
        raise ConfigError(
            f"spline basis does not break separation: transformed column {j} "
            f"({owners[j] or d.names[int(np.argmax(T[:, j] != 0))]}) is still a perfect predictor"
        )
    inner = irls_fit(PoissonObjective(Xt, d.y), cfg.irls)
    beta = T @ inner.beta
    fit = FitResult(
        beta=beta,
        loglik=inner.loglik,
        fisher=inner.fisher,
        converged=inner.converged,
        iterations=inner.iterations,
        objective_trace=inner.objective_trace,
        divergent=np.zeros(d.k, dtype=bool),
        strategy=cfg.name,
        fit_beta=inner.beta,
        transform=T,
        info=dict(inner.info),
    )
    fit.info["fit_divergent"] = inner.divergent.tolist()
    fit.info["n_fit_params"] = int(T.shape[1])
    fit.info["knots"] = {kind: s.knots.tolist() for kind, (_, s) in specs.items()}
    return fit

