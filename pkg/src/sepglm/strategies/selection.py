"""Cross-validated choice of a strategy hyperparameter."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import gof
from ..data import TrialSet
from ..errors import ConfigError, DataError

log = logging.getLogger(__name__)


def make_folds(ids: list, k, seed: int = 0) -> list[list]:
    """Split trial ids into ``k`` folds (``"loo"``/``None``: one trial each)."""
    if k is None or k == "loo":
        return [[i] for i in ids]
    k = int(k)
    if k < 2:
        raise ConfigError("need k >= 2 folds or leave-one-trial-out")
    if k > len(ids):
        raise ConfigError(f"{k} folds requested but only {len(ids)} training trials")
    order = np.random.default_rng(seed).permutation(len(ids))
    return [[ids[i] for i in part] for part in np.array_split(order, k)]


def select_hyperparameter(
    trials: TrialSet,
    config,
    grid,
    p: int,
    q: int,
    k="loo",
    seed: int = 0,
    band_edges=None,
    threads: int | None = None,
):
    """Pick the grid value with the best mean held-out R.

    Every value is fitted on all folds but one and scored on the remaining
    fold.  Folds whose held-out trials have no spikes are skipped with a
    warning.  A fold scoring ``-inf``, or on which the value is inadmissible
    for the data (a :class:`ConfigError` from the fit), makes that value's
    mean ``-inf``; other fit failures are left out of the mean.  Ties
    go to the stronger regularisation.  Returns ``(best, table)`` where the
    table has one dict per grid value.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("hyperparameter grid is empty")
    if config.hyperparameter is None:
        raise ConfigError(f"strategy {config.name!r} has no tunable hyperparameter")
    configs = [config.with_value(v) for v in grid]
    try:
        train = trials.training()
    except DataError:
        train = trials
    ids = train.ids
    folds = make_folds(ids, k, seed)
    usable = []
    for f, held in enumerate(folds):
        test = train.subset(held)
        if test.total_spikes == 0:
            warnings.warn(f"fold {f} has no spikes in its held-out trials; skipped", RuntimeWarning)
            continue
        rest = [i for i in ids if i not in set(held)]
        if not rest:
            raise DataError("a fold leaves no training trials")
        usable.append((f, train.subset(rest), test))
    if not usable:
        raise DataError("every fold was skipped: no held-out spikes")

    jobs = [(g, f, tr, te) for g in range(len(grid)) for (f, tr, te) in usable]

    def run(job):
        g, f, tr, te = job
        try:
            return gof.cross_validated_R(configs[g], tr, te, p, q, band_edges), None
        except ConfigError as exc:
            # the value cannot be used on this fold's data (e.g. a knot
            # spacing that leaves separation in place): inadmissible
            log.info("grid value %r inadmissible on fold %d: %s", grid[g], f, exc)
            return -math.inf, str(exc)
        except DataError as exc:
            log.info("grid value %r fold %d failed: %s", grid[g], f, exc)
            return math.nan, str(exc)

    if threads is not None and threads <= 1:
        scores = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(run, jobs))
    errors = [e for _, e in scores]
    scores = [s for s, _ in scores]

    table = []
    n_f = len(usable)
    for g, value in enumerate(grid):
        fold_scores = scores[g * n_f : (g + 1) * n_f]
        finite = [s for s in fold_scores if not math.isnan(s)]
        mean = math.fsum(finite) / len(finite) if finite and -math.inf not in finite else (
            -math.inf if finite else math.nan
        )
        table.append(
            {
                "value": value,
                "mean_R_CV": mean,
                "fold_R_CV": fold_scores,
                "folds": [f for f, _, _ in usable],
                "errors": [e for e in errors[g * n_f : (g + 1) * n_f] if e],
            }
        )

    def key(row):
        m = row["mean_R_CV"]
        m = -math.inf if math.isnan(m) else m
        return (m, config.strength(row["value"]))

    best = max(table, key=key)
    return best["value"], table
