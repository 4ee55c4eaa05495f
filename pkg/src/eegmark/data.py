"""EEG datasets: synthetic generation, container I/O, windowing, splits and
trigger-set construction."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InsufficientData, MetadataError, SpecError, SplitError
from .filtergen import FilterMask, WonderFilter, overlay

DATASET_MAGIC = b"EEGW1"
TRIALS_MAGIC = b"EEGT1"
_HEADER = struct.Struct("<5I")


@dataclass(frozen=True)
class EEGDataset:
    samples: np.ndarray  # [N, C, T] float32
    labels: np.ndarray  # [N] int64
    num_labels: int = 2
    sample_rate: float = 128.0
    source: str = "unknown"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if samples.ndim != 3:
            raise SpecError(f"samples must be [N, C, T], got {samples.shape}")
        if len(samples) != len(labels):
            raise SpecError("samples and labels differ in length")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_labels):
            raise SpecError(f"labels must lie in [0, {self.num_labels})")
        if not np.all(np.isfinite(samples)):
            raise SpecError("samples contain NaN or infinite values")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_shape(self) -> tuple[int, int]:
        return tuple(self.samples.shape[1:])

    def subset(self, indices) -> "EEGDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EEGDataset(self.samples[idx], self.labels[idx], self.num_labels, self.sample_rate, self.source)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_labels)


def concat(*datasets: EEGDataset) -> EEGDataset:
    first = datasets[0]
    return EEGDataset(
        np.concatenate([d.samples for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        first.num_labels,
        first.sample_rate,
        first.source,
    )


# -- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Each class is a sum of sinusoids at its listed frequencies (Hz) with a
    random phase per channel, plus white Gaussian noise."""

    n_samples: int = 2000
    channels: int = 8
    timepoints: int = 64
    sample_rate: float = 64.0
    class_bands: tuple[tuple[float, ...], ...] = ((6.0,), (11.0,))
    noise_std: float = 0.5
    class_balance: tuple[float, ...] | None = None
    seed: int = 0

    @property
    def num_labels(self) -> int:
        return len(self.class_bands)


def _class_counts(n: int, balance: Sequence[float]) -> np.ndarray:
    w = np.asarray(balance, dtype=float)
    w = w / w.sum()
    raw = w * n
    counts = np.floor(raw).astype(int)
    for j in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[j] += 1
    return counts


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> EEGDataset:
    """Deterministic band-limited EEG stand-in, min-max scaled to [0, 1]."""
    if spec.n_samples < 1 or spec.channels < 1 or spec.timepoints < 1:
        raise SpecError("n_samples, channels and timepoints must be positive")
    if not spec.class_bands or any(len(b) == 0 for b in spec.class_bands):
        raise SpecError("every class needs at least one frequency")
    nyquist = spec.sample_rate / 2
    for band in spec.class_bands:
        for f in band:
            if not 0 < f < nyquist:
                raise SpecError(f"frequency {f} Hz is outside (0, {nyquist}) Hz")
    if spec.noise_std < 0:
        raise SpecError("noise_std must be non-negative")
    k = spec.num_labels
    balance = spec.class_balance if spec.class_balance is not None else [1.0] * k
    if len(balance) != k or min(balance) < 0 or sum(balance) <= 0:
        raise SpecError("class_balance needs one non-negative weight per class")

    rng = np.random.default_rng(spec.seed)
    counts = _class_counts(spec.n_samples, balance)
    labels = rng.permutation(np.repeat(np.arange(k), counts))
    t = np.arange(spec.timepoints) / spec.sample_rate
    x = np.zeros((spec.n_samples, spec.channels, spec.timepoints))
    for cls, band in enumerate(spec.class_bands):
        idx = np.flatnonzero(labels == cls)
        for f in band:
            phase = rng.uniform(0, 2 * np.pi, size=(len(idx), spec.channels, 1))
            x[idx] += np.sin(2 * np.pi * f * t + phase)
    x += rng.normal(0.0, spec.noise_std, size=x.shape) if spec.noise_std > 0 else 0.0
    lo, hi = x.min(), x.max()
    x = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    return EEGDataset(x.astype(np.float32), labels, k, spec.sample_rate, "synthetic")


def normalize(dataset: EEGDataset) -> EEGDataset:
    """Global min-max scaling to [0, 1]."""
    x = dataset.samples.astype(np.float64)
    lo, hi = x.min(), x.max()
    x = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    return EEGDataset(x.astype(np.float32), dataset.labels, dataset.num_labels, dataset.sample_rate, dataset.source)


# -- container I/O ----------------------------------------------------------

def _require_rate(rate) -> int:
    rate_i = int(round(float(rate)))
    if rate_i <= 0 or abs(rate_i - float(rate)) > 1e-9:
        raise MetadataError(f"sample rate {rate!r} must be a positive whole number of Hz")
    return rate_i


def dumps_dataset(ds: EEGDataset) -> bytes:
    n, c, t = ds.samples.shape
    if ds.num_labels > 256:
        raise FormatError("labels must fit in one byte")
    return (
        DATASET_MAGIC
        + _HEADER.pack(n, c, t, _require_rate(ds.sample_rate), ds.num_labels)
        + np.ascontiguousarray(ds.samples, dtype="<f4").tobytes()
        + ds.labels.astype(np.uint8).tobytes()
    )


def loads_dataset(data: bytes, source: str = "container") -> EEGDataset:
    if data[:5] != DATASET_MAGIC:
        raise FormatError("missing EEGW1 magic")
    if len(data) < 5 + _HEADER.size:
        raise FormatError("truncated header")
    n, c, t, rate, k = _HEADER.unpack_from(data, 5)
    if rate == 0:
        raise MetadataError("sample rate is unknown (0)")
    body = 5 + _HEADER.size
    n_float = n * c * t
    if len(data) != body + 4 * n_float + n:
        raise FormatError(f"expected {body + 4 * n_float + n} bytes, found {len(data)}")
    samples = np.frombuffer(data, dtype="<f4", count=n_float, offset=body).reshape(n, c, t)
    labels = np.frombuffer(data, dtype=np.uint8, count=n, offset=body + 4 * n_float)
    if n and labels.max() >= k:
        raise FormatError("label byte exceeds num_labels")
    return EEGDataset(samples.astype(np.float32), labels.astype(np.int64), k, float(rate), source)


def save_dataset(ds: EEGDataset, path) -> None:
    Path(path).write_bytes(dumps_dataset(ds))


def load_dataset(path) -> EEGDataset:
    return loads_dataset(Path(path).read_bytes(), source=str(path))


@dataclass(frozen=True)
class TrialRecording:
    """Continuous per-trial signals with their self-assessment ratings.

    ``ratings[:, 0]`` is valence; further columns (arousal, dominance,
    liking) are carried but unused.
    """

    signals: np.ndarray  # [trials, C, T] float32
    ratings: np.ndarray  # [trials, R] float32
    sample_rate: float = 128.0

    def __post_init__(self):
        object.__setattr__(self, "signals", np.asarray(self.signals, dtype=np.float32))
        object.__setattr__(self, "ratings", np.asarray(self.ratings, dtype=np.float32).reshape(len(self.signals), -1))


def dumps_trials(rec: TrialRecording) -> bytes:
    n, c, t = rec.signals.shape
    r = rec.ratings.shape[1]
    return (
        TRIALS_MAGIC
        + _HEADER.pack(n, c, t, _require_rate(rec.sample_rate), r)
        + np.ascontiguousarray(rec.ratings, dtype="<f4").tobytes()
        + np.ascontiguousarray(rec.signals, dtype="<f4").tobytes()
    )


def loads_trials(data: bytes) -> TrialRecording:
    if data[:5] != TRIALS_MAGIC:
        raise FormatError("missing EEGT1 magic")
    if len(data) < 5 + _HEADER.size:
        raise FormatError("truncated header")
    n, c, t, rate, r = _HEADER.unpack_from(data, 5)
    if rate == 0:
        raise MetadataError("sample rate is unknown (0)")
    body = 5 + _HEADER.size
    if r < 1:
        raise FormatError("trial container holds no ratings")
    if len(data) != body + 4 * (n * r + n * c * t):
        raise FormatError("trial container has the wrong length")
    ratings = np.frombuffer(data, dtype="<f4", count=n * r, offset=body).reshape(n, r)
    signals = np.frombuffer(data, dtype="<f4", count=n * c * t, offset=body + 4 * n * r).reshape(n, c, t)
    return TrialRecording(signals.astype(np.float32), ratings.astype(np.float32), float(rate))


def window_trials(rec: TrialRecording, valence_threshold: float = 5.0, window_seconds: float = 1.0,
                  source: str = "trials") -> EEGDataset:
    """Non-overlapping windows per trial; label 1 iff valence > threshold."""
    if rec.sample_rate <= 0:
        raise MetadataError("sample rate is unknown")
    win = window_seconds * rec.sample_rate
    if win < 1 or abs(win - round(win)) > 1e-9:
        raise MetadataError(f"window of {window_seconds}s is not a whole number of samples")
    win = int(round(win))
    n, c, t = rec.signals.shape
    per_trial = t // win
    cut = rec.signals[:, :, : per_trial * win].reshape(n, c, per_trial, win)
    samples = cut.transpose(0, 2, 1, 3).reshape(n * per_trial, c, win)
    labels = np.repeat((rec.ratings[:, 0] > valence_threshold).astype(np.int64), per_trial)
    return EEGDataset(samples, labels, 2, rec.sample_rate, source)


def load_deap_windows(path, valence_threshold: float = 5.0, window_seconds: float = 1.0) -> EEGDataset:
    """Read a trial container and slice it into labeled windows."""
    return window_trials(loads_trials(Path(path).read_bytes()), valence_threshold, window_seconds, str(path))


# -- CSV trial exchange -----------------------------------------------------
# One row per (trial, channel): trial,channel,valence[,arousal,...],t0,t1,...

def read_trials_csv(path, sample_rate: float) -> TrialRecording:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty CSV", line=1) from None
        if header[:2] != ["trial", "channel"]:
            raise FormatError("header must start with 'trial,channel'", line=1)
        t_cols = [i for i, h in enumerate(header) if h.startswith("t") and h[1:].isdigit()]
        r_cols = list(range(2, t_cols[0] if t_cols else len(header)))
        if not r_cols or header[2] != "valence":
            raise FormatError("missing 'valence' rating column after 'trial,channel'", line=1)
        if not t_cols:
            raise FormatError("no timepoint columns (t0, t1, ...)", line=1)
        trials: dict[str, dict] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            try:
                ch = int(row[1])
                ratings = [float(row[i]) for i in r_cols]
                values = [float(row[i]) for i in t_cols]
            except ValueError as exc:
                raise FormatError(str(exc), line=lineno) from None
            entry = trials.setdefault(row[0], {"ratings": ratings, "channels": {}})
            if entry["ratings"] != ratings:
                raise FormatError(f"ratings of trial {row[0]} differ between rows", line=lineno)
            if ch in entry["channels"]:
                raise FormatError(f"duplicate channel {ch} in trial {row[0]}", line=lineno)
            entry["channels"][ch] = values
    if not trials:
        raise FormatError("CSV holds no data rows")
    n_ch = {len(e["channels"]) for e in trials.values()}
    if len(n_ch) != 1:
        raise FormatError("trials have different channel counts")
    c = n_ch.pop()
    signals, ratings = [], []
    for key, entry in trials.items():
        if sorted(entry["channels"]) != list(range(c)):
            raise FormatError(f"trial {key} channels must be 0..{c - 1}")
        signals.append([entry["channels"][i] for i in range(c)])
        ratings.append(entry["ratings"])
    return TrialRecording(np.array(signals, dtype=np.float32), np.array(ratings, dtype=np.float32), sample_rate)


def write_trials_csv(rec: TrialRecording, path, rating_names: Sequence[str] = ("valence", "arousal", "dominance", "liking")) -> None:
    n, c, t = rec.signals.shape
    r = rec.ratings.shape[1]
    names = list(rating_names[:r]) + [f"rating{i}" for i in range(len(rating_names), r)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "channel", *names, *(f"t{i}" for i in range(t))])
        for i in range(n):
            for ch in range(c):
                w.writerow([i, ch, *map(repr, rec.ratings[i].tolist()), *map(repr, rec.signals[i, ch].tolist())])


# -- splits -----------------------------------------------------------------

def split(dataset: EEGDataset, fractions: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0):
    """Stratified, deterministic, disjoint and exhaustive split into len(fractions) parts."""
    fr = np.asarray(fractions, dtype=float)
    if np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise SplitError(f"fractions {tuple(fractions)} must be non-negative and sum to 1")
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[] for _ in fr]
    for cls in range(dataset.num_labels):
        idx = rng.permutation(np.flatnonzero(dataset.labels == cls))
        counts = _class_counts(len(idx), fr) if len(idx) else np.zeros(len(fr), int)
        for p, chunk in enumerate(np.split(idx, np.cumsum(counts)[:-1])):
            parts[p].extend(chunk.tolist())
    return tuple(dataset.subset(np.sort(np.asarray(p, dtype=np.int64))) for p in parts)


def carve(dataset: EEGDataset, fraction: float, seed: int = 0) -> tuple[EEGDataset, EEGDataset]:
    """Split off a disjoint part sized ``fraction`` of what remains.

    Returns ``(kept, carved)`` with ``len(carved) ~= fraction * len(kept)``.
    """
    share = fraction / (1.0 + fraction)
    kept, carved = split(dataset, (1.0 - share, share), seed)
    return kept, carved


# -- trigger sets -----------------------------------------------------------

@dataclass(frozen=True)
class TriggerSet:
    normal_inputs: np.ndarray
    normal_labels: np.ndarray
    null_inputs: np.ndarray
    null_labels: np.ndarray
    normal_sources: np.ndarray
    null_sources: np.ndarray
    num_labels: int = 2

    def as_dataset(self) -> EEGDataset:
        return EEGDataset(
            np.concatenate([self.normal_inputs, self.null_inputs]),
            np.concatenate([self.normal_labels, self.null_labels]),
            self.num_labels,
            source="trigger",
        )


def _draw_sources(labels: np.ndarray, count: int, num_labels: int, rng) -> np.ndarray:
    present = [c for c in range(num_labels) if np.any(labels == c)]
    chosen: list[int] = []
    if count >= len(present):
        chosen = [int(rng.choice(np.flatnonzero(labels == c))) for c in present]
    rest = np.setdiff1d(np.arange(len(labels)), chosen)
    chosen += rng.choice(rest, size=count - len(chosen), replace=False).tolist()
    return rng.permutation(np.asarray(chosen, dtype=np.int64))


def build_trigger_set(dataset: EEGDataset, filt: WonderFilter | FilterMask, count_per_kind: int,
                      seed: int = 0, target_label: int | None = None) -> TriggerSet:
    """Normal samples (filter, labeled y_W) and null samples (inverted filter,
    original label), each drawn independently from ``dataset``."""
    if count_per_kind > len(dataset):
        raise InsufficientData(f"need {count_per_kind} samples, dataset has {len(dataset)}")
    if count_per_kind < 0:
        raise ValueError("count_per_kind must be non-negative")
    if target_label is None:
        if not isinstance(filt, WonderFilter):
            raise ValueError("a bare mask needs an explicit target_label")
        target_label = filt.target_label
    rng = np.random.default_rng(seed)
    normal_src = _draw_sources(dataset.labels, count_per_kind, dataset.num_labels, rng)
    null_src = _draw_sources(dataset.labels, count_per_kind, dataset.num_labels, rng)
    return TriggerSet(
        normal_inputs=overlay(dataset.samples[normal_src], filt),
        normal_labels=np.full(count_per_kind, target_label, dtype=np.int64),
        null_inputs=overlay(dataset.samples[null_src], filt, use_inverted=True),
        null_labels=dataset.labels[null_src].copy(),
        normal_sources=normal_src,
        null_sources=null_src,
        num_labels=dataset.num_labels,
    )
