"""Attack harness: fine-tuning, transfer learning, pruning sweeps and piracy.

Every attack works on a copy of the model and records, per step, the clean
task accuracy, the true-embedding accuracy (``F(x + W) = y_W``) and the null
accuracy (``F(x + W-) = y``) on an owner-held evaluation set.
"""

from __future__ import annotations

import csv
import enum
import io
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import EEGDataset, build_trigger_set, concat
from .errors import InvalidRatio, ModeError, RatioOrderError, ShapeMismatch
from .filtergen import DEFAULT_SUITE, HashSuite, WonderFilter, overlay, transform
from .identity import OwnerKeypair, VerifierString, build_verifier_string, generate_keypair, sign_verifier
from .nn import Dense, Network, NetworkConfig, PruneStrategy, TrainConfig, evaluate, init_network, prune, train
from .nn.network import reinit_layers
from .pipeline import DEFAULT_BLOCK, DEFAULT_MARGIN, DEFAULT_TRIGGER_FRACTION, VerificationReport, verify_watermark


class AttackKind(str, enum.Enum):
    FINE_TUNE = "FINE_TUNE"
    TRANSFER = "TRANSFER"
    PRUNE = "PRUNE"
    PIRACY = "PIRACY"


class FineTuneMode(str, enum.Enum):
    FTLL = "FTLL"
    FTAL = "FTAL"
    RTLL = "RTLL"
    RTAL = "RTAL"


class TransferMode(str, enum.Enum):
    LAST_LAYER = "LAST_LAYER"
    ALL_LAYERS = "ALL_LAYERS"


def _mode(enum_cls, value):
    try:
        return enum_cls(value.value if isinstance(value, enum.Enum) else str(value).upper())
    except ValueError:
        raise ModeError(f"unknown {enum_cls.__name__} {value!r}") from None


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind
    mode: str = ""
    epochs: int = 30
    ratios: tuple[float, ...] = ()
    attacker_fraction: float = 0.2
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if not 0.0 < self.attacker_fraction <= 1.0:
            raise ValueError("attacker_fraction must lie in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
                           early_stop_patience=None, shuffle_seed=self.seed)


@dataclass(frozen=True)
class AttackStep:
    step: int
    eeg_acc: float
    true_acc: float
    null_acc: float
    extras: dict = field(default_factory=dict)


@dataclass
class AttackReport:
    kind: AttackKind
    mode: str
    seed: int
    T_acc: float
    baseline_acc: float
    steps: list[AttackStep] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def final(self) -> AttackStep:
        return self.steps[-1]

    @property
    def watermark_survived(self) -> bool:
        return self.final.true_acc >= self.T_acc

    @property
    def task_preserved(self) -> bool:
        return self.final.eeg_acc >= self.baseline_acc - DEFAULT_MARGIN

    @property
    def stem(self) -> str:
        return f"{self.kind.value.lower()}_{self.mode.lower()}_seed{self.seed}"

    def to_csv(self) -> str:
        extra_keys = sorted({k for s in self.steps for k in s.extras})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "eeg_acc", "true_acc", "null_acc", *extra_keys])
        for s in self.steps:
            w.writerow([s.step, f"{s.eeg_acc:.6f}", f"{s.true_acc:.6f}", f"{s.null_acc:.6f}",
                        *(_fmt(s.extras.get(k, "")) for k in extra_keys)])
        return buf.getvalue()

    def summary_text(self) -> str:
        f = self.final
        rows = [
            ("kind", self.kind.value), ("mode", self.mode), ("seed", self.seed), ("steps", len(self.steps)),
            ("final_eeg_acc", f.eeg_acc), ("final_true_acc", f.true_acc), ("final_null_acc", f.null_acc),
            ("T_acc", self.T_acc), ("baseline_acc", self.baseline_acc),
            ("watermark_survived", self.watermark_survived), ("task_preserved", self.task_preserved),
        ]
        rows.extend(sorted(self.metadata.items()))
        return "".join(f"{k}: {_fmt(v)}\n" for k, v in rows)

    def write(self, out_dir) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, self.stem + ".csv")
        txt_path = os.path.join(out_dir, self.stem + ".summary.txt")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(txt_path, "w", encoding="utf-8") as fh:
            fh.write(self.summary_text())
        return csv_path, txt_path


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


@dataclass(frozen=True)
class WatermarkProbe:
    """Owner-side measurement: a filter plus a labeled evaluation set."""

    filter: WonderFilter
    test_set: EEGDataset

    def measure(self, network: Network) -> tuple[float, float, float]:
        X, y = self.test_set.samples, self.test_set.labels
        eeg = float(np.mean(network.predict(X) == y))
        true = float(np.mean(network.predict(overlay(X, self.filter)) == self.filter.target_label))
        null = float(np.mean(network.predict(overlay(X, self.filter, use_inverted=True)) == y))
        return eeg, true, null


def _report(kind, mode, cfg: AttackConfig, probe: WatermarkProbe, model: Network, T_acc, baseline_acc):
    eeg, true, null = probe.measure(model)
    if T_acc is None:
        T_acc = eeg - DEFAULT_MARGIN
    if baseline_acc is None:
        baseline_acc = eeg
    return AttackReport(kind, mode, cfg.seed, float(T_acc), float(baseline_acc), [AttackStep(0, eeg, true, null)])


def _record(report: AttackReport, probe: WatermarkProbe, network: Network, **extras) -> None:
    eeg, true, null = probe.measure(network)
    report.steps.append(AttackStep(len(report.steps), eeg, true, null, extras))


def fine_tune_attack(model: Network, attacker_data: EEGDataset, mode, probe: WatermarkProbe,
                     cfg: AttackConfig | None = None, T_acc: float | None = None,
                     baseline_acc: float | None = None) -> AttackReport:
    """FTLL/FTAL tune the last dense layer / all layers; RTLL/RTAL first re-draw the last dense layer."""
    mode = _mode(FineTuneMode, mode)
    cfg = cfg or AttackConfig(AttackKind.FINE_TUNE, mode.value)
    report = _report(AttackKind.FINE_TUNE, mode.value, cfg, probe, model, T_acc, baseline_acc)
    net = model.copy()
    if mode in (FineTuneMode.RTLL, FineTuneMode.RTAL):
        net = reinit_layers(net, "LAST_DENSE", seed=cfg.seed + 1)
    last = net.select_layers("LAST_DENSE")
    trainable = last if mode in (FineTuneMode.FTLL, FineTuneMode.RTLL) else None
    train(net, attacker_data, None, cfg.train_config(), trainable=trainable,
          on_epoch=lambda e, n: _record(report, probe, n))
    report.metadata.update(attacker_samples=len(attacker_data), epochs=cfg.epochs,
                           learning_rate=cfg.learning_rate)
    return report


def _with_head(network: Network, num_labels: int, seed: int) -> Network:
    """Copy of ``network`` whose last dense layer is resized to ``num_labels`` and re-drawn."""
    layers = list(network.config.layers)
    head = network.dense_layers()[-1]
    layers[head] = Dense(num_labels)
    config = NetworkConfig(tuple(layers), network.config.input_shape, num_labels)
    fresh = init_network(config, seed, network.dtype)
    params = [dict((k, v.copy()) for k, v in p.items()) for p in network.params]
    params[head] = fresh.params[head]
    return Network(config, params, network.seed)


def _graft_head(body: Network, original: Network) -> Network:
    """``body``'s feature layers under ``original``'s classifier head."""
    head = original.dense_layers()[-1]
    params = [dict(p) for p in body.params]
    params[head] = original.params[head]
    return Network(original.config, params, original.seed)


def transfer_attack(model: Network, new_task: EEGDataset, mode, probe: WatermarkProbe,
                    cfg: AttackConfig | None = None, new_task_test: EEGDataset | None = None,
                    T_acc: float | None = None, baseline_acc: float | None = None) -> AttackReport:
    """Retarget the model to ``new_task``.

    The head is resized to the new label space and re-drawn.  Watermark and
    original-task accuracies are read through a frozen copy of the original
    head placed on top of the tuned feature layers.
    """
    mode = _mode(TransferMode, mode)
    if tuple(new_task.sample_shape) != tuple(model.config.input_shape):
        raise ShapeMismatch(f"new task inputs {new_task.sample_shape} differ from model input {model.config.input_shape}")
    cfg = cfg or AttackConfig(AttackKind.TRANSFER, mode.value)
    report = _report(AttackKind.TRANSFER, mode.value, cfg, probe, model, T_acc, baseline_acc)
    net = _with_head(model, new_task.num_labels, cfg.seed + 1)
    trainable = net.select_layers("LAST_DENSE") if mode is TransferMode.LAST_LAYER else None
    frozen = model.copy()

    def on_epoch(epoch, n):
        extras = {}
        if new_task_test is not None:
            extras["new_task_acc"] = evaluate(n, new_task_test).accuracy
        _record(report, probe, _graft_head(n, frozen), **extras)

    train(net, new_task, None, cfg.train_config(), trainable=trainable, on_epoch=on_epoch)
    report.metadata.update(new_task_samples=len(new_task), new_task_labels=new_task.num_labels,
                           epochs=cfg.epochs)
    if new_task_test is not None:
        report.metadata["final_new_task_acc"] = evaluate(net, new_task_test).accuracy
    return report


def prune_attack(model: Network, strategy, ratios: Sequence[float], probe: WatermarkProbe,
                 cfg: AttackConfig | None = None, T_acc: float | None = None,
                 baseline_acc: float | None = None) -> AttackReport:
    """Evaluate an independently pruned copy at every ratio (no retraining)."""
    strategy = _mode(PruneStrategy, strategy)
    ratios = [float(r) for r in ratios]
    if not ratios:
        raise RatioOrderError("at least one ratio is required")
    if any(b < a for a, b in zip(ratios, ratios[1:])):
        raise RatioOrderError(f"ratios must be ascending, got {ratios}")
    if ratios[0] < 0.0 or ratios[-1] > 1.0:
        raise InvalidRatio("ratios must lie in [0, 1]")
    cfg = cfg or AttackConfig(AttackKind.PRUNE, strategy.value, ratios=tuple(ratios))
    eeg0, true0, null0 = probe.measure(model)
    report = AttackReport(AttackKind.PRUNE, strategy.value, cfg.seed,
                          float(eeg0 - DEFAULT_MARGIN if T_acc is None else T_acc),
                          float(eeg0 if baseline_acc is None else baseline_acc))
    for j, r in enumerate(ratios):
        pruned = prune(model, r, strategy, seed=cfg.seed)
        eeg, true, null = probe.measure(pruned)
        report.steps.append(AttackStep(j, eeg, true, null, {"ratio": r}))
    report.metadata.update(unpruned_eeg_acc=eeg0, unpruned_true_acc=true0, unpruned_null_acc=null0)
    return report


@dataclass(frozen=True)
class PiracyOutcome:
    report: AttackReport
    owner: VerificationReport
    attacker: VerificationReport
    pirated: Network = field(repr=False)


def piracy_attack(model: Network, attacker_keypair: OwnerKeypair, attacker_v: VerifierString,
                  attacker_data: EEGDataset, probe: WatermarkProbe, owner_public_key: bytes, owner_sig,
                  owner_v: VerifierString, cfg: AttackConfig | None = None, T_acc: float | None = None,
                  block_shape: Sequence[int] = DEFAULT_BLOCK, suite: HashSuite = DEFAULT_SUITE,
                  trigger_fraction: float = DEFAULT_TRIGGER_FRACTION,
                  baseline_acc: float | None = None) -> PiracyOutcome:
    """Try to embed a second watermark W_A into an already watermarked model.

    Steps track the owner's watermark; the attacker's accuracies go into the
    step extras.  Both watermarks are verified on the probe set at the end.
    """
    cfg = cfg or AttackConfig(AttackKind.PIRACY, "SECOND_WATERMARK", epochs=100)
    report = _report(AttackKind.PIRACY, cfg.mode or "SECOND_WATERMARK", cfg, probe, model, T_acc, baseline_acc)
    sig_a = sign_verifier(attacker_keypair, attacker_v)
    w_a = transform(sig_a, model.config.input_shape, model.config.num_labels, block_shape, suite,
                    probe.filter.oob_magnitude)
    attacker_probe = WatermarkProbe(w_a, probe.test_set)
    _, ta0, na0 = attacker_probe.measure(model)
    report.steps[0] = replace(report.steps[0], extras={"attacker_true_acc": ta0, "attacker_null_acc": na0})

    count = max(1, int(round(trigger_fraction * len(attacker_data))))
    triggers = build_trigger_set(attacker_data, w_a, count, seed=cfg.seed).as_dataset()
    net = model.copy()

    def on_epoch(epoch, n):
        _, ta, na = attacker_probe.measure(n)
        _record(report, probe, n, attacker_true_acc=ta, attacker_null_acc=na)

    train(net, concat(attacker_data, triggers), None, cfg.train_config(), on_epoch=on_epoch)
    t_acc = report.T_acc
    owner = verify_watermark(net, owner_public_key, owner_sig, owner_v, probe.test_set, t_acc, suite,
                             probe.filter.block_shape, probe.filter.oob_magnitude)
    attacker = verify_watermark(net, attacker_keypair.public_key, sig_a, attacker_v, probe.test_set, t_acc,
                                suite, block_shape, probe.filter.oob_magnitude)
    eeg_drop = report.steps[0].eeg_acc - report.final.eeg_acc
    report.metadata.update(owner_confirmed=owner.confirmed, attacker_confirmed=attacker.confirmed,
                           eeg_drop=eeg_drop, attacker_filter_digest=w_a.digest(), epochs=cfg.epochs)
    return PiracyOutcome(report, owner, attacker, net)


@dataclass(frozen=True)
class ProbeSummary:
    accs: tuple[float, ...]
    confirmations: int
    reports: tuple[VerificationReport, ...] = field(repr=False, default=())

    @property
    def count(self) -> int:
        return len(self.accs)

    def to_text(self) -> str:
        a = np.asarray(self.accs)
        return (f"count: {self.count}\nconfirmations: {self.confirmations}\n"
                f"acc_min: {a.min():.6f}\nacc_mean: {a.mean():.6f}\nacc_max: {a.max():.6f}\n"
                + "".join(f"acc_{i}: {v:.6f}\n" for i, v in enumerate(self.accs)))


def random_identities(count: int, seed: int = 0) -> list[tuple[OwnerKeypair, VerifierString]]:
    rng = np.random.default_rng([seed, 0x5EED])
    out = []
    for i in range(count):
        kp = generate_keypair(rng.bytes(32))
        out.append((kp, build_verifier_string(f"probe-{i}", int(rng.integers(0, 2**32)))))
    return out


def false_positive_probe(model: Network, count: int, test_inputs, T_acc: float, seed: int = 0,
                         block_shape: Sequence[int] = DEFAULT_BLOCK, suite: HashSuite = DEFAULT_SUITE,
                         extra: Sequence[tuple[OwnerKeypair, VerifierString]] = ()) -> ProbeSummary:
    """Verify ``count`` random valid identities (plus any ``extra`` ones) against ``model``."""
    if count < 10:
        raise ValueError("a false-positive probe needs at least 10 identities")
    reports = []
    for kp, v in [*random_identities(count, seed), *extra]:
        sig = sign_verifier(kp, v)
        reports.append(verify_watermark(model, kp.public_key, sig, v, test_inputs, T_acc, suite, block_shape))
    return ProbeSummary(tuple(r.acc for r in reports), sum(r.confirmed for r in reports), tuple(reports))
