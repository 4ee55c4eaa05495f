"""Watermark embedding (from scratch or on a pretrained model) and verification.

Embedding adds, for every watermark record, a trigger set of normal samples
(filter overlaid, relabeled to the filter's target) and null samples
(inverted filter overlaid, original label kept) to the clean training data.

Verification first checks the owner's signature, then recomputes the filter
from it and measures

    acc = min( P[F(x + W) = y_W],  P[F(x + W-) = F(x)] )

over a held-out input set.  Ownership is confirmed when the signature is
valid and ``acc >= T_acc``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import EEGDataset, build_trigger_set, concat
from .errors import InsufficientData, RecordIntegrityError, ShapeMismatch
from .filtergen import DEFAULT_OOB, DEFAULT_SUITE, HashSuite, WonderFilter, overlay, transform
from .identity import OwnerKeypair, Signature, VerifierString, build_verifier_string, sign_verifier, verify_signature
from .nn import EpochLog, Network, NetworkConfig, TrainConfig, evaluate, init_network, train

DEFAULT_BLOCK = (4, 32)
DEFAULT_TRIGGER_FRACTION = 0.05
DEFAULT_MARGIN = 0.05
MIN_TEST_SET = 30

NULL_CLAUSE_NOTE = (
    "null_consistency compares F(x+W-) with F(x); null-embedding training "
    "targets the original label instead"
)


class Strategy(str, enum.Enum):
    FROM_SCRATCH = "FROM_SCRATCH"
    PRETRAIN = "PRETRAIN"


@dataclass(frozen=True)
class WatermarkRecord:
    """Everything needed to embed and later dispute one watermark.

    The filter must be exactly what ``transform`` derives from the signature;
    anything else is rejected at construction.
    """

    verifier: VerifierString
    signature: Signature
    filter: WonderFilter
    suite: HashSuite = DEFAULT_SUITE
    embedding_strategy: Strategy = Strategy.FROM_SCRATCH
    trigger_fraction: float = DEFAULT_TRIGGER_FRACTION

    def __post_init__(self):
        object.__setattr__(self, "embedding_strategy", Strategy(self.embedding_strategy))
        if not 0.0 < self.trigger_fraction <= 1.0:
            raise ValueError("trigger_fraction must lie in (0, 1]")
        f = self.filter
        expected = transform(self.signature, f.input_shape, f.num_labels, f.block_shape, self.suite, f.oob_magnitude)
        if expected != f:
            raise RecordIntegrityError("filter does not match transform(signature)")


def make_record(keypair: OwnerKeypair, owner_id: str, timestamp: int, input_shape: Sequence[int],
                num_labels: int, block_shape: Sequence[int] = DEFAULT_BLOCK,
                oob_magnitude: float = DEFAULT_OOB, suite: HashSuite = DEFAULT_SUITE,
                strategy: Strategy | str = Strategy.FROM_SCRATCH,
                trigger_fraction: float = DEFAULT_TRIGGER_FRACTION) -> WatermarkRecord:
    v = build_verifier_string(owner_id, timestamp)
    sig = sign_verifier(keypair, v)
    filt = transform(sig, input_shape, num_labels, block_shape, suite, oob_magnitude)
    return WatermarkRecord(v, sig, filt, suite, Strategy(strategy), trigger_fraction)


def make_records(keypair: OwnerKeypair, owner_id: str, first_timestamp: int, k: int, input_shape,
                 num_labels: int, **kwargs) -> list[WatermarkRecord]:
    """``k`` records with distinct verifier strings (consecutive timestamps)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return [make_record(keypair, owner_id, first_timestamp + j, input_shape, num_labels, **kwargs) for j in range(k)]


@dataclass(frozen=True)
class Splits:
    train: EEGDataset
    val: EEGDataset | None
    test: EEGDataset

    @classmethod
    def of(cls, splits) -> "Splits":
        if isinstance(splits, Splits):
            return splits
        train_set, val_set, test_set = splits
        return cls(train_set, val_set, test_set)


def _check_records(config: NetworkConfig, records: Sequence[WatermarkRecord]) -> None:
    if not records:
        raise ValueError("at least one watermark record is required")
    for r in records:
        if tuple(r.filter.input_shape) != tuple(config.input_shape):
            raise ShapeMismatch(f"filter shape {r.filter.input_shape} does not fit model input {config.input_shape}")
        if r.filter.num_labels != config.num_labels:
            raise ShapeMismatch("filter label space differs from the model's")


def trigger_data(dataset: EEGDataset, records: Sequence[WatermarkRecord], seed: int = 0) -> EEGDataset:
    """Normal and null samples for every record, drawn from ``dataset``."""
    parts = []
    for j, r in enumerate(records):
        count = max(1, int(round(r.trigger_fraction * len(dataset))))
        parts.append(build_trigger_set(dataset, r.filter, count, seed=[seed, j]).as_dataset())
    return concat(*parts)


def _embed(network: Network, splits: Splits, records, train_cfg: TrainConfig, seed: int):
    _check_records(network.config, records)
    combined = concat(splits.train, trigger_data(splits.train, records, seed))
    # early stopping watches the clean validation loss only: the trigger loss
    # is not expected to settle at the same pace as the task loss
    return train(network, combined, splits.val, train_cfg)


def embed_from_scratch(config: NetworkConfig, splits, records: Sequence[WatermarkRecord],
                       train_cfg: TrainConfig = TrainConfig(epochs=50, clip_norm=1.0), seed: int = 0
                       ) -> tuple[Network, list[EpochLog]]:
    """Train a fresh network on clean data plus every record's trigger set."""
    _check_records(config, records)
    return _embed(init_network(config, seed), Splits.of(splits), records, train_cfg, seed)


def embed_pretrain(pretrained: Network, splits, records: Sequence[WatermarkRecord],
                   train_cfg: TrainConfig = TrainConfig(epochs=20, clip_norm=1.0), seed: int = 0
                   ) -> tuple[Network, list[EpochLog]]:
    """Continue training a clean-trained network with the trigger sets added.

    Works on a copy; ``pretrained`` is left as it was.
    """
    return _embed(pretrained.copy(), Splits.of(splits), records, train_cfg, seed)


def baseline_train(config: NetworkConfig, splits,
                   train_cfg: TrainConfig = TrainConfig(epochs=30, clip_norm=1.0),
                   seed: int = 0) -> tuple[Network, list[EpochLog]]:
    """Plain training on clean data: the no-watermark control model."""
    s = Splits.of(splits)
    return train(init_network(config, seed), s.train, s.val, train_cfg)


def default_threshold(model: Network, test_set, margin: float = DEFAULT_MARGIN) -> float:
    """T_acc = clean test accuracy minus ``margin``."""
    return evaluate(model, test_set).accuracy - margin


@dataclass(frozen=True)
class VerificationReport:
    signature_valid: bool
    true_embed_accuracy: float
    null_consistency: float
    acc: float
    T_acc: float
    confirmed: bool
    test_set_size: int
    filter_digest: str
    target_label: int
    null_label_accuracy: float | None = None
    notes: tuple[str, ...] = field(default=())

    KEYS = ("signature_valid", "true_embed_accuracy", "null_consistency", "acc", "T_acc", "confirmed",
            "test_set_size", "filter_digest", "target_label", "null_label_accuracy")

    def to_text(self) -> str:
        lines = []
        for key in self.KEYS:
            value = getattr(self, key)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = f"{value:.6f}"
            elif value is None:
                value = "n/a"
            lines.append(f"{key}: {value}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def verify_watermark(model: Network, public_key: bytes, sig: Signature, v: VerifierString,
                     test_inputs, T_acc: float, suite: HashSuite = DEFAULT_SUITE,
                     block_shape: Sequence[int] = DEFAULT_BLOCK, oob_magnitude: float = DEFAULT_OOB,
                     test_labels=None, notes: Sequence[str] = ()) -> VerificationReport:
    """Two-step ownership check.  Failures are reported, never raised.

    ``test_labels`` is optional; when given, the report also carries how often
    the inverted-filter inputs keep their true label.
    """
    X = np.asarray(test_inputs.samples if hasattr(test_inputs, "samples") else test_inputs)
    if test_labels is None and hasattr(test_inputs, "labels"):
        test_labels = test_inputs.labels
    if len(X) < MIN_TEST_SET:
        raise InsufficientData(f"verification needs at least {MIN_TEST_SET} inputs, got {len(X)}")
    valid = verify_signature(public_key, sig, v)
    filt = transform(sig, model.config.input_shape, model.config.num_labels, block_shape, suite, oob_magnitude)
    clean = model.predict(X)
    true_acc = float(np.mean(model.predict(overlay(X, filt)) == filt.target_label))
    null_pred = model.predict(overlay(X, filt, use_inverted=True))
    null_cons = float(np.mean(null_pred == clean))
    null_lab = None if test_labels is None else float(np.mean(null_pred == np.asarray(test_labels)))
    acc = min(true_acc, null_cons)
    return VerificationReport(
        signature_valid=valid,
        true_embed_accuracy=true_acc,
        null_consistency=null_cons,
        acc=acc,
        T_acc=float(T_acc),
        confirmed=bool(valid and acc >= T_acc),
        test_set_size=len(X),
        filter_digest=filt.digest(),
        target_label=filt.target_label,
        null_label_accuracy=null_lab,
        notes=(NULL_CLAUSE_NOTE, *notes),
    )


def verify_record(model: Network, public_key: bytes, record: WatermarkRecord, test_set, T_acc: float,
                  notes: Sequence[str] = ()) -> VerificationReport:
    f = record.filter
    return verify_watermark(model, public_key, record.signature, record.verifier, test_set, T_acc,
                            record.suite, f.block_shape, f.oob_magnitude, notes=notes)
