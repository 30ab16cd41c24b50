"""Spike/stimulus containers, CSV ingestion and synthetic spike trains.

Counts live on a uniform grid of width ``bin_width`` seconds.  Event times
are binned with ``floor(t / bin_width)``, so an event exactly on a boundary
lands in the later bin.

A coefficient of ``-inf`` is an allowed sentinel throughout the package: it
contributes nothing when its covariate is zero and forces the rate to zero
when the covariate is nonzero (see :func:`linear_predictor`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal, stats

from . import kernels
from .errors import DataError, NumericalError

TRAIN = "train"
TEST = "test"

# Above this expected count per bin the simulation is treated as divergent.
MAX_RATE_PER_BIN = 1e4


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BinnedSpikeTrain:
    trial_id: str | int
    bin_width: float
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 1:
            raise DataError(f"trial {self.trial_id}: counts must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
            raise DataError(f"trial {self.trial_id}: counts must be integers")
        if np.any(counts < 0):
            raise DataError(f"trial {self.trial_id}: negative counts")
        if not self.bin_width > 0:
            raise DataError(f"trial {self.trial_id}: bin_width must be positive")
        object.__setattr__(self, "counts", _frozen(counts, np.int64))

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def spike_bins(self) -> np.ndarray:
        """Bin index of every spike, repeated for multi-spike bins."""
        return np.repeat(np.arange(self.n_bins), self.counts)


@dataclass(frozen=True)
class StimulusTrace:
    trial_id: str | int
    bin_width: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise DataError(f"trial {self.trial_id}: stimulus must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise DataError(f"trial {self.trial_id}: stimulus contains non-finite values")
        if not self.bin_width > 0:
            raise DataError(f"trial {self.trial_id}: bin_width must be positive")
        object.__setattr__(self, "values", _frozen(values, float))


@dataclass(frozen=True)
class Trial:
    spikes: BinnedSpikeTrain
    stimulus: StimulusTrace
    role: str = TRAIN

    def __post_init__(self):
        if self.role not in (TRAIN, TEST):
            raise DataError(f"unknown trial role {self.role!r}")
        if self.spikes.trial_id != self.stimulus.trial_id:
            raise DataError(
                f"spike trial {self.spikes.trial_id} paired with stimulus trial "
                f"{self.stimulus.trial_id}"
            )
        if self.spikes.n_bins != self.stimulus.values.size:
            raise DataError(
                f"trial {self.trial_id}: length mismatch between spikes "
                f"({self.spikes.n_bins}) and stimulus ({self.stimulus.values.size})"
            )
        if not math.isclose(self.spikes.bin_width, self.stimulus.bin_width, rel_tol=1e-12):
            raise DataError(f"trial {self.trial_id}: spike and stimulus bin widths differ")

    @property
    def trial_id(self):
        return self.spikes.trial_id

    @property
    def n_bins(self) -> int:
        return self.spikes.n_bins


@dataclass(frozen=True)
class TrialSet:
    """Ordered collection of trials sharing one bin width."""

    trials: tuple[Trial, ...]

    def __post_init__(self):
        trials = tuple(self.trials)
        object.__setattr__(self, "trials", trials)
        if not trials:
            raise DataError("a trial set needs at least one trial")
        widths = {t.spikes.bin_width for t in trials}
        if max(widths) - min(widths) > 1e-12 * max(widths):
            raise DataError("all trials must share the same bin width")
        ids = [t.trial_id for t in trials]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate trial ids in trial set")

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    @property
    def bin_width(self) -> float:
        return self.trials[0].spikes.bin_width

    @property
    def ids(self) -> list:
        return [t.trial_id for t in self.trials]

    def by_role(self, role: str) -> TrialSet:
        chosen = tuple(t for t in self.trials if t.role == role)
        if not chosen:
            raise DataError(f"no trials with role {role!r}")
        return TrialSet(chosen)

    def training(self) -> TrialSet:
        return self.by_role(TRAIN)

    def held_out(self) -> TrialSet:
        return self.by_role(TEST)

    def subset(self, ids: Iterable, role: str | None = None) -> TrialSet:
        lookup = {t.trial_id: t for t in self.trials}
        out = []
        for i in ids:
            if i not in lookup:
                raise DataError(f"unknown trial id {i!r}")
            t = lookup[i]
            out.append(t if role is None else replace(t, role=role))
        return TrialSet(tuple(out))

    def with_roles(self, train_ids: Iterable, test_ids: Iterable = ()) -> TrialSet:
        train_ids, test_ids = list(train_ids), list(test_ids)
        overlap = set(train_ids) & set(test_ids)
        if overlap:
            raise DataError(f"trials {sorted(map(str, overlap))} are both train and test")
        out = self.subset(train_ids, TRAIN).trials
        if test_ids:
            out = out + self.subset(test_ids, TEST).trials
        return TrialSet(out)

    def concat(self, other: TrialSet) -> TrialSet:
        return TrialSet(self.trials + other.trials)

    def resample(self, picks: Sequence[int]) -> TrialSet:
        """Trials at positions ``picks`` (repeats allowed), relabelled uniquely."""
        out = []
        for k, i in enumerate(picks):
            t = self.trials[int(i)]
            new_id = f"{t.trial_id}#{k}"
            out.append(
                Trial(
                    BinnedSpikeTrain(new_id, t.spikes.bin_width, t.spikes.counts),
                    StimulusTrace(new_id, t.stimulus.bin_width, t.stimulus.values),
                    t.role,
                )
            )
        return TrialSet(tuple(out))

    @property
    def total_spikes(self) -> int:
        return int(sum(t.spikes.counts.sum() for t in self.trials))


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_id(raw: str):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        return raw


def _read_rows(path: Path, allowed_headers: Sequence[tuple[str, ...]]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header line") from None
        if header not in allowed_headers:
            wanted = " or ".join(",".join(h) for h in allowed_headers)
            raise DataError(f"{path}:1: unexpected header {','.join(header)!r}, expected {wanted}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, row))
    return header, rows


def _number(path, lineno, text, kind=float):
    try:
        value = kind(text.strip())
    except ValueError:
        raise DataError(f"{path}:{lineno}: cannot parse {text!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise DataError(f"{path}:{lineno}: non-finite value {text!r}")
    return value


def bin_event_times(times: np.ndarray, bin_width: float) -> np.ndarray:
    """Bin index ``floor(t / bin_width)`` with boundary events sent to the later bin."""
    q = np.asarray(times, dtype=float) / bin_width
    idx = np.floor(q)
    # q = 2.9999999999999996 for t = 0.003, dt = 0.001: that event is on a boundary
    idx = np.where(idx + 1 - q <= 1e-9 * np.maximum(1.0, q), idx + 1, idx)
    return idx.astype(np.int64)


def load_trials(spike_file, stimulus_file, bin_width: float) -> TrialSet:
    """Read paired spike and stimulus CSV files into a :class:`TrialSet`.

    The stimulus file (``trial,bin,current_pA``) must list every bin of every
    trial in increasing order starting from 0, already aligned to the spike
    grid.  The spike file is either ``trial,bin,count`` (sparse; absent bins
    are zero) or ``trial,time_s`` event times in non-decreasing order.
    All trials must have the same length.  Every trial gets the ``train``
    role; use :meth:`TrialSet.with_roles` to hold some out.
    """
    if not bin_width > 0:
        raise DataError("bin_width must be positive")
    spike_file, stimulus_file = Path(spike_file), Path(stimulus_file)

    _, stim_rows = _read_rows(stimulus_file, [("trial", "bin", "current_pA")])
    stim: dict = {}
    for lineno, (trial, b, value) in stim_rows:
        tid = _parse_id(trial)
        b = _number(stimulus_file, lineno, b, int)
        bins = stim.setdefault(tid, [])
        if b != len(bins):
            raise DataError(
                f"{stimulus_file}:{lineno}: non-monotone or missing bin {b} for trial {tid} "
                f"(expected {len(bins)})"
            )
        bins.append(_number(stimulus_file, lineno, value))
    if not stim:
        raise DataError(f"{stimulus_file}: no stimulus rows")
    lengths = {tid: len(v) for tid, v in stim.items()}
    if len(set(lengths.values())) != 1:
        raise DataError(f"{stimulus_file}: trial length mismatch {lengths}")
    n_bins = next(iter(lengths.values()))

    header, spike_rows = _read_rows(
        spike_file, [("trial", "bin", "count"), ("trial", "time_s")]
    )
    counts = {tid: np.zeros(n_bins, dtype=np.int64) for tid in stim}
    if header == ("trial", "bin", "count"):
        last_bin: dict = {}
        for lineno, (trial, b, c) in spike_rows:
            tid = _parse_id(trial)
            if tid not in counts:
                raise DataError(f"{spike_file}:{lineno}: trial {tid} has no stimulus")
            b = _number(spike_file, lineno, b, int)
            c = _number(spike_file, lineno, c, int)
            if c < 0:
                raise DataError(f"{spike_file}:{lineno}: negative count {c}")
            if b <= last_bin.get(tid, -1):
                raise DataError(f"{spike_file}:{lineno}: non-monotone bin {b} in trial {tid}")
            if not 0 <= b < n_bins:
                raise DataError(
                    f"{spike_file}:{lineno}: trial length mismatch, bin {b} outside "
                    f"stimulus length {n_bins}"
                )
            last_bin[tid] = b
            counts[tid][b] = c
    else:
        times: dict = {}
        for lineno, (trial, t) in spike_rows:
            tid = _parse_id(trial)
            if tid not in counts:
                raise DataError(f"{spike_file}:{lineno}: trial {tid} has no stimulus")
            t = _number(spike_file, lineno, t)
            if t < 0:
                raise DataError(f"{spike_file}:{lineno}: negative event time {t}")
            prev = times.setdefault(tid, [])
            if prev and t < prev[-1][1]:
                raise DataError(f"{spike_file}:{lineno}: non-monotone time stamp {t} in trial {tid}")
            prev.append((lineno, t))
        for tid, events in times.items():
            idx = bin_event_times(np.array([t for _, t in events]), bin_width)
            beyond = np.nonzero(idx >= n_bins)[0]
            if beyond.size:
                lineno = events[beyond[0]][0]
                raise DataError(
                    f"{spike_file}:{lineno}: trial length mismatch, event after the "
                    f"last stimulus bin ({n_bins} bins)"
                )
            np.add.at(counts[tid], idx, 1)

    trials = tuple(
        Trial(
            BinnedSpikeTrain(tid, bin_width, counts[tid]),
            StimulusTrace(tid, bin_width, np.array(stim[tid])),
        )
        for tid in stim
    )
    return TrialSet(trials)


def write_trials(trials: TrialSet, spike_file, stimulus_file) -> None:
    """Write ``trial,bin,count`` and ``trial,bin,current_pA`` files."""
    with open(spike_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "bin", "count"])
        for t in trials:
            for b in np.nonzero(t.spikes.counts)[0]:
                w.writerow([t.trial_id, int(b), int(t.spikes.counts[b])])
    with open(stimulus_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "bin", "current_pA"])
        for t in trials:
            for b, v in enumerate(t.stimulus.values):
                w.writerow([t.trial_id, b, repr(float(v))])


# ---------------------------------------------------------------------------
# Simulation


@dataclass(frozen=True)
class OUStimulus:
    """Ornstein-Uhlenbeck injected current (pA), sampled on the spike grid."""

    mean_pA: float = 0.0
    sd_pA: float = 100.0
    tau_s: float = 0.02

    def sample(self, n_bins: int, bin_width: float, rng: np.random.Generator) -> np.ndarray:
        a = math.exp(-bin_width / self.tau_s)
        noise = rng.standard_normal(n_bins)
        noise[0] /= math.sqrt(1.0 - a * a)  # start in the stationary distribution
        path = signal.lfilter([math.sqrt(1.0 - a * a)], [1.0, -a], noise)
        return self.mean_pA + self.sd_pA * path

    def quantile_edges(self, q: int) -> np.ndarray:
        """Band edges giving equal stationary occupancy, outer edges infinite."""
        inner = stats.norm.ppf(np.arange(1, q) / q, loc=self.mean_pA, scale=self.sd_pA)
        return np.concatenate([[-np.inf], inner, [np.inf]])


@dataclass(frozen=True)
class SimSpec:
    """Generative parameters for :func:`simulate_spike_train`.

    ``beta`` is ordered intercept, history lags 1..p, stimulus bands 1..q and
    may contain ``-inf``.  The intercept is the log expected count per bin.
    """

    beta: np.ndarray
    p: int
    q: int
    n_bins: int
    n_trials: int = 1
    seed: int = 0
    bin_width: float = 0.001
    stimulus: OUStimulus = field(default_factory=OUStimulus)
    band_edges: np.ndarray | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if self.p < 0 or self.q < 0:
            raise DataError("p and q must be non-negative")
        if beta.shape != (1 + self.p + self.q,):
            raise DataError(f"beta has length {beta.size}, expected 1+p+q = {1 + self.p + self.q}")
        if np.any(np.isnan(beta)):
            raise DataError("beta contains NaN")
        if self.n_bins < 1 or self.n_trials < 1:
            raise DataError("n_bins and n_trials must be positive")
        if not self.bin_width > 0:
            raise DataError("bin_width must be positive")
        object.__setattr__(self, "beta", _frozen(beta, float))
        if self.band_edges is not None:
            edges = np.asarray(self.band_edges, dtype=float)
            if edges.shape != (self.q + 1,) or np.any(np.diff(edges) <= 0):
                raise DataError("band_edges must be q+1 strictly increasing values")
            object.__setattr__(self, "band_edges", _frozen(edges, float))

    def edges(self) -> np.ndarray:
        if self.band_edges is not None:
            return np.asarray(self.band_edges)
        return self.stimulus.quantile_edges(max(self.q, 1))


def assign_bands(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """0-based band index of each value; -1 where a value lies outside all bands.

    Bands are half-open ``[lo, hi)`` except the last, which includes its upper edge.
    """
    values = np.asarray(values, dtype=float)
    q = edges.size - 1
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.where(values == edges[-1], q - 1, idx)
    idx[(idx < 0) | (idx >= q)] = -1
    return idx


def _trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial_index)]))


def simulate_trial(spec: SimSpec, trial_index: int, role: str = TRAIN) -> Trial:
    rng = _trial_rng(spec.seed, trial_index)
    stim = spec.stimulus.sample(spec.n_bins, spec.bin_width, rng)
    uniforms = rng.random(spec.n_bins)
    beta = np.asarray(spec.beta)
    intercept = beta[0]
    if intercept == np.inf:
        raise NumericalError("divergent rate: intercept is +inf")
    base = np.full(spec.n_bins, intercept)
    if spec.q:
        band = assign_bands(stim, spec.edges())
        band_beta = beta[1 + spec.p :]
        if np.any(band < 0):
            raise DataError("simulated stimulus fell outside the supplied band edges")
        contrib = band_beta[band]
        if np.any(contrib == np.inf):
            raise NumericalError("divergent rate: +inf stimulus coefficient on an active band")
        base = np.where(contrib == -np.inf, -np.inf, base + contrib)
    history = np.ascontiguousarray(beta[1 : 1 + spec.p])
    counts, bad = kernels.simulate_counts(
        history, np.ascontiguousarray(base), uniforms, MAX_RATE_PER_BIN
    )
    if bad >= 0:
        raise NumericalError(f"divergent rate at bin {bad} of trial {trial_index}")
    return Trial(
        BinnedSpikeTrain(trial_index, spec.bin_width, counts),
        StimulusTrace(trial_index, spec.bin_width, stim),
        role,
    )


def simulate_spike_train(spec: SimSpec, role: str = TRAIN) -> TrialSet:
    """Draw ``spec.n_trials`` independent trials from the history GLM.

    Each trial has its own random stream derived from ``(seed, trial index)``,
    so trials can be regenerated individually and in any order.  History
    before the first bin is taken to be silent.
    """
    return TrialSet(tuple(simulate_trial(spec, i, role) for i in range(spec.n_trials)))
