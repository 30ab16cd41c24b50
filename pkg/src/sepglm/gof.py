"""Goodness of fit: deviance, R and R_CV, effective degrees of freedom,
time rescaling with a KS test, parameter correlations and resource use.
"""

from __future__ import annotations

import math
import time
import tracemalloc
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from .data import BinnedSpikeTrain, TrialSet
from .design import DesignMatrix, build_design
from .errors import DataError
from .glm import FitResult

KS_COEFF = 1.36


def deviance(y, rates) -> float:
    """Poisson deviance ``2 * sum(y log(y/rate) - (y - rate))``.

    Non-negative, zero only when ``rates == y``; ``+inf`` if a row with
    spikes has rate 0.
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(rates, dtype=float)
    if np.any(lam < 0) or np.any(np.isnan(lam)):
        raise DataError("rates must be non-negative")
    if np.any((lam == 0) & (y > 0)):
        return math.inf
    # rel_entr(y, lam) = y log(y/lam) with 0 log 0 = 0
    terms = special.rel_entr(y, lam) - y + lam
    return float(2.0 * math.fsum(terms))


def null_deviance(y) -> float:
    """Deviance of the constant-rate model at its MLE ``mean(y)``."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("empty response")
    return deviance(y, np.full(y.shape, y.mean()))


def deviance_ratio(d_model: float, d_null: float) -> float:
    """``(D_N - D_M) / D_N``; NaN when ``D_N == 0`` (the ratio is undefined)."""
    if d_null == 0:
        return math.nan
    if math.isinf(d_model):
        return -math.inf
    return (d_null - d_model) / d_null


def in_sample_R(fit: FitResult, d: DesignMatrix) -> float:
    return deviance_ratio(deviance(d.y, fit.predict_rate(d.X)), null_deviance(d.y))


def heldout_R(fit: FitResult, d_test: DesignMatrix) -> float:
    """R of ``fit`` on another design, against that design's own constant-rate null."""
    if d_test.n == 0:
        raise DataError("empty test set")
    return in_sample_R(fit, d_test)


def describe_R(value: float) -> str:
    if value == -math.inf:
        return "< 0 (unbounded)"
    if math.isnan(value):
        return "undefined"
    return f"{value:.4f}"


def split_designs(train: TrialSet, test: TrialSet, p: int, q: int, band_edges=None):
    """Training and held-out designs built with the same band edges."""
    d_train = build_design(train, p, q, band_edges, role=None)
    d_test = build_design(test, p, q, d_train.band_edges, role=None)
    return d_train, d_test


def cross_validated_R(config, train: TrialSet, test: TrialSet, p: int, q: int, band_edges=None) -> float:
    """Fit ``config`` on ``train`` and score it on ``test``.

    Returns ``-inf`` when a test spike lands where the fitted rate is zero.
    """
    from .strategies import fit_strategy

    if len(test) == 0:
        raise DataError("empty test set")
    d_train, d_test = split_designs(train, test, p, q, band_edges)
    fit = fit_strategy(config, d_train)
    return heldout_R(fit, d_test)


# ---------------------------------------------------------------------------
# effective degrees of freedom and correlations


def _data_information(fit: FitResult, d: DesignMatrix) -> np.ndarray:
    Xf = fit.fitted_design(d.X)
    theta = Xf @ fit.fit_beta
    lam = np.exp(np.minimum(theta, 30.0))
    F = (Xf * lam[:, None]).T @ Xf
    return fit.weight * 0.5 * (F + F.T)


def effective_dof(fit: FitResult, d: DesignMatrix, rcond: float = 1e-10) -> float:
    """Trace of the hat matrix ``W^1/2 X A^-1 X' W^1/2`` at the fit.

    ``A`` is the information of the maximised objective, so penalties and
    priors shrink the count; limit coordinates and the rows they predict do
    not contribute.  The trace ``tr(A^-1 F)`` is evaluated after scaling ``A``
    to unit diagonal, so coordinates with tiny weights (large negative
    estimates) still count while exactly collinear directions (relative
    eigenvalue below ``rcond``) do not.
    """
    F = _data_information(fit, d)
    A = np.asarray(fit.fisher, dtype=float)
    diag = np.diag(A).copy()
    live = diag > 0
    if not live.any():
        return 0.0
    s = 1.0 / np.sqrt(diag[live])
    As = A[np.ix_(live, live)] * np.outer(s, s)
    Fs = F[np.ix_(live, live)] * np.outer(s, s)
    w, V = np.linalg.eigh(0.5 * (As + As.T))
    keep = w > rcond * w.max()
    inv = (V[:, keep] / w[keep]) @ V[:, keep].T
    return float(np.clip(np.sum(inv * Fs), 0.0, A.shape[0]))


def param_correlation(fit: FitResult) -> np.ndarray:
    """Correlation matrix from the inverse information, in original coordinates.

    Coordinates with an undefined or non-positive variance are NaN.
    """
    C = fit.covariance()
    var = np.diag(C).copy()
    ok = np.isfinite(var) & (var > 0)
    s = np.where(ok, np.sqrt(np.where(ok, var, 1.0)), np.nan)
    R = C / np.outer(s, s)
    R = np.clip(0.5 * (R + R.T), -1.0, 1.0)
    R[np.diag_indices_from(R)] = np.where(ok, 1.0, np.nan)
    return R


# ---------------------------------------------------------------------------
# time rescaling


def rescale_times(spikes: BinnedSpikeTrain, rate_hz) -> np.ndarray:
    """``u_k = 1 - exp(-z_k)`` for consecutive spikes, ``z_k`` the integrated
    rate over ``(t_{k-1}, t_k]`` with the rate constant within each bin.

    Several spikes in one bin give ``z = 0`` for all but the first.
    """
    rate = np.asarray(rate_hz, dtype=float)
    if rate.shape != (spikes.n_bins,):
        raise DataError("one rate per bin required")
    if np.any(rate < 0):
        raise DataError("rates must be non-negative")
    counts = spikes.counts
    times = np.repeat(np.arange(spikes.n_bins), counts)
    if times.size < 2:
        return np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(rate * spikes.bin_width)])
    z = cum[times[1:] + 1] - cum[times[:-1] + 1]
    return -np.expm1(-z)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    bound: float
    passed: bool
    n: int

    def to_dict(self):
        return asdict(self)


def ks_analysis(u, exact: bool = False) -> KSResult:
    """KS distance of ``u`` from Uniform(0, 1) and its 95% bound.

    The bound is ``1.36 / sqrt(n)``; ``exact=True`` uses the finite-n
    quantile of the KS distribution instead.
    """
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise DataError("no rescaled intervals to test")
    if np.any((u < 0) | (u > 1)):
        raise DataError("rescaled values must lie in [0, 1]")
    n = u.size
    stat = float(stats.kstest(u, "uniform").statistic)
    bound = float(stats.kstwo.ppf(0.95, n)) if exact else KS_COEFF / math.sqrt(n)
    return KSResult(stat, bound, stat <= bound, n)


def ks_curve(u) -> tuple[np.ndarray, np.ndarray]:
    """Model quantiles ``(k - 0.5)/n`` against the sorted rescaled values."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    return (np.arange(1, n + 1) - 0.5) / n, u


def rescale_trials(fit: FitResult, trials: TrialSet, p: int, q: int, band_edges) -> np.ndarray:
    """Rescaled intervals of every trial under ``fit`` (first ``p`` bins skipped)."""
    out = []
    for t in trials:
        d = build_design(TrialSet((t,)), p, q, band_edges, role=None)
        rate = fit.predict_rate(d.X) / t.spikes.bin_width
        sub = BinnedSpikeTrain(t.trial_id, t.spikes.bin_width, t.spikes.counts[p:])
        out.append(rescale_times(sub, rate))
    return np.concatenate(out) if out else np.zeros(0)


# ---------------------------------------------------------------------------
# resources and the report


def measure(fn, *args, **kwargs):
    """Run ``fn`` and return ``(result, seconds, peak traced bytes)``."""
    tracing = tracemalloc.is_tracing()
    if not tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    t0 = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    finally:
        elapsed = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        if not tracing:
            tracemalloc.stop()
    return result, elapsed, max(peak - base, 0)


@dataclass
class GofReport:
    deviance_model: float
    deviance_null: float
    R: float
    R_CV: float | None
    edof: float
    edof_ratio: float | None
    n_params: int
    ks: KSResult | None = None
    runtime_s: float | None = None
    peak_memory_bytes: int | None = None
    extra: dict = field(default_factory=dict)

    def numeric_dict(self) -> dict:
        """Everything except the timing/memory fields."""
        out = {
            "deviance_model": self.deviance_model,
            "deviance_null": self.deviance_null,
            "R": self.R,
            "R_CV": self.R_CV,
            "R_CV_text": None if self.R_CV is None else describe_R(self.R_CV),
            "edof": self.edof,
            "edof_ratio": self.edof_ratio,
            "n_params": self.n_params,
            "ks": None if self.ks is None else self.ks.to_dict(),
        }
        out.update(self.extra)
        return out

    def resource_dict(self) -> dict:
        return {"runtime_s": self.runtime_s, "peak_memory_bytes": self.peak_memory_bytes}


def gof_report(
    fit: FitResult,
    d_train: DesignMatrix,
    d_test: DesignMatrix | None = None,
    reference_edof: float | None = None,
    ks: KSResult | None = None,
) -> GofReport:
    dm = deviance(d_train.y, fit.predict_rate(d_train.X))
    dn = null_deviance(d_train.y)
    edof = effective_dof(fit, d_train)
    return GofReport(
        deviance_model=dm,
        deviance_null=dn,
        R=deviance_ratio(dm, dn),
        R_CV=None if d_test is None else heldout_R(fit, d_test),
        edof=edof,
        edof_ratio=None if not reference_edof else edof / reference_edof,
        n_params=int(fit.fit_beta.size),
        ks=ks,
    )
