"""Detection and classification of perfect predictors.

A column is a perfect predictor when every row on which it is nonzero has a
zero count.  A set of columns *generates* one when some linear combination
of them is nonzero somewhere but vanishes on every spiking row.  Single
columns are tested exactly; combinations need a numerical rank decision.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .design import DesignMatrix
from .errors import DataError

DEFAULT_TOL = 1e-10
# combo weights smaller than this are treated as absent members
WEIGHT_TOL = 1e-8


class PredictorClass(str, enum.Enum):
    STRUCTURAL = "structural?"
    SAMPLING = "sampling"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class Combo:
    """A generated perfect predictor ``sum_k weights[k] * X[:, columns[k]]``."""

    columns: tuple[int, ...]
    weights: tuple[float, ...]

    def vector(self, k: int) -> np.ndarray:
        a = np.zeros(k)
        a[list(self.columns)] = self.weights
        return a


@dataclass
class SeparationReport:
    perfect_columns: tuple[int, ...]
    empty_columns: tuple[int, ...]
    combos: list[Combo]
    perfect_set: tuple[int, ...]
    predicted_rows: np.ndarray
    column_names: tuple[str, ...] = ()
    n_rows: int = 0
    classification: dict = field(default_factory=dict)
    combo_classification: list = field(default_factory=list)

    @property
    def separated(self) -> bool:
        return bool(self.perfect_columns or self.combos)

    def to_dict(self) -> dict:
        names = self.column_names

        def nm(j):
            return names[j] if names else str(j)

        return {
            "n_rows": self.n_rows,
            "perfect_columns": [{"index": j, "name": nm(j)} for j in self.perfect_columns],
            "empty_columns": [{"index": j, "name": nm(j)} for j in self.empty_columns],
            "generated_combos": [
                {
                    "columns": [{"index": j, "name": nm(j)} for j in c.columns],
                    "weights": list(c.weights),
                }
                for c in self.combos
            ],
            "perfect_set": list(self.perfect_set),
            "n_predicted_rows": int(self.predicted_rows.size),
            "classification": {nm(j): v.value for j, v in sorted(self.classification.items())},
            "combo_classification": [v.value for v in self.combo_classification],
        }


def _nonzero(X):
    return X != 0


def find_empty_columns(d: DesignMatrix) -> np.ndarray:
    start = 1 if d.has_intercept else 0
    nz = _nonzero(d.X[:, start:]).any(axis=0)
    return np.nonzero(~nz)[0] + start


def find_perfect_columns(d: DesignMatrix) -> np.ndarray:
    """Non-intercept columns that are nonzero somewhere but only where y == 0.

    All-zero columns are not perfect; see :func:`find_empty_columns`.
    """
    start = 1 if d.has_intercept else 0
    nz = _nonzero(d.X[:, start:])
    spiking = d.y > 0
    hits_spike = nz[spiking].any(axis=0)
    anywhere = nz.any(axis=0)
    return np.nonzero(anywhere & ~hits_spike)[0] + start


def _null_space(M: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of null(M), rank cut at ``tol * s_max``."""
    k = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(k)
    # thin SVD already yields all k right vectors for tall matrices
    _, s, vt = linalg.svd(M, full_matrices=M.shape[0] < k)
    if s.size == 0 or s[0] == 0:
        return np.eye(k)
    rank = int(np.sum(s > tol * s[0]))
    return vt[rank:].T


def _canonical(a: np.ndarray) -> np.ndarray:
    a = np.where(np.abs(a) < WEIGHT_TOL * np.abs(a).max(), 0.0, a)
    a = a / np.linalg.norm(a)
    first = a[np.nonzero(a)[0][0]]
    return a if first > 0 else -a


def find_generated_combos(
    d: DesignMatrix, tol: float = DEFAULT_TOL, exclude=None
) -> list[Combo]:
    """Basis of combinations that vanish on spiking rows but not on all rows.

    Works on the non-intercept columns not already perfect (or listed in
    ``exclude``).  The returned weight vectors span the part of
    ``null(X_spiking)`` orthogonal to ``null(X)``, so pure collinearity is
    never reported.  Each vector has unit length and a positive first weight.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    start = 1 if d.has_intercept else 0
    skip = set(find_perfect_columns(d).tolist() if exclude is None else exclude)
    cols = np.array([j for j in range(start, d.k) if j not in skip], dtype=int)
    if cols.size == 0:
        return []
    Xc = d.X[:, cols]
    scale = np.abs(Xc).max(axis=0)
    scale[scale == 0] = 1.0
    Xc = Xc / scale  # column scaling only changes weights, not which combos exist
    N = _null_space(Xc[d.y > 0], tol)
    if N.shape[1] == 0:
        return []
    M = _null_space(Xc, tol)
    Z = N - M @ (M.T @ N) if M.shape[1] else N
    u, s, _ = linalg.svd(Z, full_matrices=False)
    if s.size == 0 or s[0] <= tol:
        return []
    basis = u[:, s > max(tol, 1e-8) * max(1.0, s[0])]
    combos = []
    for a in basis.T:
        a = _canonical(a / scale)
        members = np.nonzero(a)[0]
        combos.append(Combo(tuple(int(cols[m]) for m in members), tuple(float(a[m]) for m in members)))
    return combos


def _combo_values(d: DesignMatrix, combo: Combo) -> np.ndarray:
    return d.X[:, list(combo.columns)] @ np.asarray(combo.weights)


def _combo_support(d: DesignMatrix, combo: Combo, tol: float) -> np.ndarray:
    v = _combo_values(d, combo)
    ref = np.abs(d.X[:, list(combo.columns)]).max(initial=0.0)
    return np.abs(v) > tol ** 0.5 * max(ref, 1.0)


def perfectly_predicted_rows(
    d: DesignMatrix, report: SeparationReport, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """Rows on which a perfect column or a generated combination is nonzero."""
    rows = np.zeros(d.n, dtype=bool)
    if report.perfect_columns:
        rows |= _nonzero(d.X[:, list(report.perfect_columns)]).any(axis=1)
    for c in report.combos:
        rows |= _combo_support(d, c, tol)
    idx = np.nonzero(rows)[0]
    if np.any(d.y[idx] > 0):
        raise DataError("internal inconsistency: a perfectly predicted row has spikes")
    return idx


def predicted_spike_count(report: SeparationReport, d_other: DesignMatrix, tol: float = DEFAULT_TOL) -> int:
    """Spikes of another design (e.g. held-out data) in rows that ``report``'s
    perfect columns or combos predict to be silent.

    A positive count means a model that sends those predictors to ``-inf``
    gives the other data zero likelihood.
    """
    if d_other.k != len(report.column_names or range(d_other.k)):
        raise DataError("designs have different columns; build both with the same recipe")
    rows = np.zeros(d_other.n, dtype=bool)
    if report.perfect_columns:
        rows |= _nonzero(d_other.X[:, list(report.perfect_columns)]).any(axis=1)
    for c in report.combos:
        rows |= _combo_support(d_other, c, tol)
    return int(d_other.y[rows].sum())


def detect_separation(d: DesignMatrix, tol: float = DEFAULT_TOL, combos: bool = True) -> SeparationReport:
    """Full report: perfect and empty columns, generated combos, predicted rows."""
    perfect = tuple(int(j) for j in find_perfect_columns(d))
    empty = tuple(int(j) for j in find_empty_columns(d))
    found = find_generated_combos(d, tol, exclude=set(perfect) | set(empty)) if combos else []
    members = set(perfect)
    for c in found:
        members.update(c.columns)
    report = SeparationReport(
        perfect_columns=perfect,
        empty_columns=empty,
        combos=found,
        perfect_set=tuple(sorted(members)),
        predicted_rows=np.zeros(0, dtype=int),
        column_names=tuple(d.names),
        n_rows=d.n,
    )
    report.predicted_rows = perfectly_predicted_rows(d, report, tol)
    return report


def classify_perfect(
    report: SeparationReport, d_small: DesignMatrix, d_large: DesignMatrix, tol: float = DEFAULT_TOL
) -> dict:
    """Label predictors by whether they stay perfect on augmented data.

    Perfect on both designs gives ``structural?`` (putative: more data might
    still break it), perfect only on the small design gives ``sampling`` and
    every other non-intercept column is ``unclassified``.  Generated combos
    are labelled the same way in ``report.combo_classification``.
    """
    if d_small.names != d_large.names:
        raise DataError("designs have different columns; build both with the same recipe")
    small_keys = set(d_small.row_keys())
    large_keys = set(d_large.row_keys())
    if not small_keys <= large_keys:
        raise DataError("the larger design does not contain every row of the smaller one")
    still = set(find_perfect_columns(d_large).tolist())
    start = 1 if d_small.has_intercept else 0
    labels = {}
    for j in range(start, d_small.k):
        if j in report.perfect_columns:
            labels[j] = PredictorClass.STRUCTURAL if j in still else PredictorClass.SAMPLING
        else:
            labels[j] = PredictorClass.UNCLASSIFIED
    combo_labels = []
    for c in report.combos:
        support = _combo_support(d_large, c, tol)
        ok = support.any() and not np.any(d_large.y[support] > 0)
        combo_labels.append(PredictorClass.STRUCTURAL if ok else PredictorClass.SAMPLING)
    report.classification = labels
    report.combo_classification = combo_labels
    return labels
