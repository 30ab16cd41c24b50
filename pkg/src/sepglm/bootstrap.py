"""Trial-level bootstrap of strategy fits."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import TrialSet
from .design import build_design
from .errors import ConfigError, DataError, SepGLMError

log = logging.getLogger(__name__)

MIN_REPLICATES = 50


@dataclass
class BootstrapSummary:
    """Percentile intervals per coefficient over the finite replicates.

    ``lower``/``upper`` are NaN where every successful replicate diverged.
    """

    names: list
    n_finite: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    divergence_fraction: np.ndarray
    n_replicates: int
    n_failed: int
    seed: int
    level: float = 0.95
    replicates: np.ndarray | None = None

    def defined(self) -> np.ndarray:
        return self.divergence_fraction < 1.0

    def to_rows(self) -> list[dict]:
        return [
            {
                "name": n,
                "n_finite": int(self.n_finite[j]),
                "lower": None if np.isnan(self.lower[j]) else float(self.lower[j]),
                "upper": None if np.isnan(self.upper[j]) else float(self.upper[j]),
                "divergence_fraction": float(self.divergence_fraction[j]),
            }
            for j, n in enumerate(self.names)
        ]

    def to_dict(self) -> dict:
        return {
            "n_replicates": self.n_replicates,
            "n_failed": self.n_failed,
            "seed": self.seed,
            "level": self.level,
            "parameters": self.to_rows(),
        }


def _replicate(config, trials: TrialSet, p, q, edges, seed, b):
    from .strategies import fit_strategy

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(b)]))
    picks = rng.integers(0, len(trials), len(trials))
    d = build_design(trials.resample(picks), p, q, edges, role=None)
    try:
        fit = fit_strategy(config, d)
    except SepGLMError as exc:
        log.info("bootstrap replicate %d failed: %s", b, exc)
        return None
    beta = np.array(fit.beta, dtype=float)
    divergent = np.asarray(fit.divergent, dtype=bool) | ~np.isfinite(beta)
    return beta, divergent


def bootstrap_ci(
    config,
    trials: TrialSet,
    p: int,
    q: int,
    B: int = 200,
    seed: int = 0,
    band_edges=None,
    threads: int | None = None,
    level: float = 0.95,
) -> BootstrapSummary:
    """Refit ``config`` on ``B`` trial sets drawn with replacement.

    Replicate ``b`` uses its own stream from ``(seed, b)``, so results do not
    depend on ``threads``.  Band edges are fixed from the full data so every
    replicate has the same columns.  A coefficient flagged divergent (or at
    a limit) in a replicate counts toward its divergence fraction and is
    excluded from its interval.
    """
    if B < MIN_REPLICATES:
        raise ConfigError(f"B too small: need at least {MIN_REPLICATES} replicates, got {B}")
    if len(trials) < 2:
        raise DataError("bootstrap needs at least 2 trials")
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    ref = build_design(trials, p, q, band_edges, role=None)
    edges = ref.band_edges

    def run(b):
        return _replicate(config, trials, p, q, edges, seed, b)

    if threads is not None and threads <= 1:
        results = [run(b) for b in range(B)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(B)))

    ok = [r for r in results if r is not None]
    k = ref.k
    if not ok:
        raise DataError("every bootstrap replicate failed")
    betas = np.array([r[0] for r in ok])
    div = np.array([r[1] for r in ok])
    usable = ~div
    n_finite = usable.sum(axis=0)
    lower = np.full(k, np.nan)
    upper = np.full(k, np.nan)
    alpha = 100 * (1 - level) / 2
    for j in range(k):
        if n_finite[j]:
            lower[j], upper[j] = np.percentile(betas[usable[:, j], j], [alpha, 100 - alpha])
    return BootstrapSummary(
        names=ref.names,
        n_finite=n_finite,
        lower=lower,
        upper=upper,
        divergence_fraction=div.mean(axis=0),
        n_replicates=B,
        n_failed=B - len(ok),
        seed=seed,
        level=level,
        replicates=betas,
    )
