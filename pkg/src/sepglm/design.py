"""Design matrices for the history + stimulus-band point-process GLM.

Column 0 is the intercept, columns ``1..p`` hold the spike counts at lags
``1..p`` and columns ``p+1..p+q`` are indicators of the stimulus band active
in the current bin.  Because exactly one indicator is on in every row the
band block always sums to the intercept column; :attr:`DesignMatrix.collinear`
records this.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import TrialSet, assign_bands
from .errors import DataError

INTERCEPT = "intercept"
HISTORY = "history"
STIMULUS = "stimulus"
GENERIC = "covariate"


@dataclass(frozen=True)
class ColumnMeta:
    kind: str
    name: str
    lag: int | None = None
    band: int | None = None
    lower_pA: float | None = None
    upper_pA: float | None = None

    @classmethod
    def intercept(cls):
        return cls(INTERCEPT, "intercept")

    @classmethod
    def history(cls, lag: int):
        return cls(HISTORY, f"hist_lag_{lag}", lag=lag)

    @classmethod
    def stimulus(cls, band: int, lower: float, upper: float):
        return cls(STIMULUS, f"stim_band_{band}", band=band, lower_pA=lower, upper_pA=upper)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    columns: tuple[ColumnMeta, ...]
    row_trial: np.ndarray
    row_bin: np.ndarray
    p: int = 0
    q: int = 0
    band_edges: np.ndarray | None = None
    bin_width: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError("X must be n x k and y length n")
        if len(self.columns) != X.shape[1]:
            raise DataError("one ColumnMeta per design column required")
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise DataError("responses must be non-negative integers")
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_arrays(cls, X, y, intercept: bool = True, names=None) -> DesignMatrix:
        """Wrap raw covariates; prepends an intercept column unless told not to."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] == 1 and np.asarray(y).size != 1:
            X = X.T
        cols = []
        if intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
            cols.append(ColumnMeta.intercept())
        k0 = len(cols)
        for j in range(X.shape[1] - k0):
            name = names[j] if names is not None else f"x{j + 1}"
            cols.append(ColumnMeta(GENERIC, name))
        n = X.shape[0]
        return cls(X, np.asarray(y), tuple(cols), np.zeros(n, dtype=object), np.arange(n))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def columns_of(self, kind: str) -> np.ndarray:
        return np.array([j for j, c in enumerate(self.columns) if c.kind == kind], dtype=int)

    @property
    def history_cols(self) -> np.ndarray:
        return self.columns_of(HISTORY)

    @property
    def stimulus_cols(self) -> np.ndarray:
        return self.columns_of(STIMULUS)

    @property
    def has_intercept(self) -> bool:
        return self.k > 0 and self.columns[0].kind == INTERCEPT

    @property
    def collinear(self) -> bool:
        """True when the band indicators reproduce the intercept column."""
        return self.has_intercept and self.stimulus_cols.size >= 1

    def row_keys(self) -> list[tuple]:
        return list(zip(self.row_trial.tolist(), self.row_bin.tolist()))

    def take_rows(self, rows) -> DesignMatrix:
        rows = np.asarray(rows)
        return DesignMatrix(
            self.X[rows], self.y[rows], self.columns, self.row_trial[rows], self.row_bin[rows],
            self.p, self.q, self.band_edges, self.bin_width, dict(self.meta),
        )

    def to_csv(self, path) -> None:
        """Export ``trial,bin,y`` followed by one column per covariate."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "bin", "y"] + self.names)
            for i in range(self.n):
                w.writerow(
                    [self.row_trial[i], int(self.row_bin[i]), int(self.y[i])]
                    + [repr(float(v)) for v in self.X[i]]
                )


def quantile_band_edges(values: np.ndarray, q: int) -> np.ndarray:
    """Equal-occupancy band edges with infinite outer edges."""
    inner = np.quantile(np.asarray(values, dtype=float), np.arange(1, q) / q)
    edges = np.concatenate([[-np.inf], inner, [np.inf]])
    if np.any(np.diff(edges) <= 0):
        raise DataError(
            "quantile band edges are not strictly increasing (ties in the stimulus); "
            "supply band_edges explicitly"
        )
    return edges


def build_design(
    trials: TrialSet,
    p: int,
    q: int,
    band_edges=None,
    role: str | None = "train",
) -> DesignMatrix:
    """Stack history and band-indicator rows for the trials with ``role``.

    The first ``p`` bins of each trial have incomplete history and are not
    used as rows.  Without ``band_edges`` the edges are the ``q``-quantiles of
    the pooled stimulus of the selected trials, open at both ends; pass the
    edges of a training design to build a matching held-out design.
    Pass ``role=None`` to use every trial.
    """
    if p < 0:
        raise DataError("p must be >= 0")
    if q < 1:
        raise DataError("q must be >= 1")
    chosen = trials if role is None else trials.by_role(role)
    for t in chosen:
        if t.n_bins <= p:
            raise DataError(
                f"trial {t.trial_id} has {t.n_bins} bins, needs at least p+1 = {p + 1}"
            )
    if band_edges is None:
        pooled = np.concatenate([t.stimulus.values for t in chosen])
        edges = quantile_band_edges(pooled, q)
        explicit = False
    else:
        edges = np.asarray(band_edges, dtype=float)
        if edges.shape != (q + 1,) or np.any(np.diff(edges) <= 0):
            raise DataError("band_edges must be q+1 strictly increasing values")
        explicit = not (np.isneginf(edges[0]) and np.isposinf(edges[-1]))

    columns = [ColumnMeta.intercept()]
    columns += [ColumnMeta.history(j) for j in range(1, p + 1)]
    columns += [ColumnMeta.stimulus(k + 1, float(edges[k]), float(edges[k + 1])) for k in range(q)]

    blocks, ys, rtrial, rbin = [], [], [], []
    for t in chosen:
        counts = t.spikes.counts.astype(float)
        n_rows = t.n_bins - p
        if p:
            # window w ends at bin w+p-1; reversed so column 0 is lag 1
            hist = sliding_window_view(counts, p)[:n_rows, ::-1]
        else:
            hist = np.zeros((n_rows, 0))
        stim = t.stimulus.values[p:]
        band = assign_bands(stim, edges)
        if np.any(band < 0):
            where = int(np.nonzero(band < 0)[0][0]) + p
            raise DataError(
                f"trial {t.trial_id} bin {where}: stimulus value {t.stimulus.values[where]} "
                f"outside all bands"
            )
        ind = np.zeros((n_rows, q))
        ind[np.arange(n_rows), band] = 1.0
        blocks.append(np.column_stack([np.ones(n_rows), hist, ind]))
        ys.append(t.spikes.counts[p:])
        rtrial.append(np.full(n_rows, t.trial_id, dtype=object))
        rbin.append(np.arange(p, t.n_bins))

    return DesignMatrix(
        np.vstack(blocks),
        np.concatenate(ys),
        tuple(columns),
        np.concatenate(rtrial),
        np.concatenate(rbin),
        p=p,
        q=q,
        band_edges=edges,
        bin_width=chosen.bin_width,
        meta={"explicit_edges": explicit, "history_padding": "rows dropped"},
    )
