"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The watermarked models are trained once per module from the bundled default
manifest, so the numbers here line up with ``eegmark run``.
"""

import filecmp
import itertools
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from helpers import GRAD_CASES, grad_instance

from eegmark.attacks import (
    AttackConfig,
    WatermarkProbe,
    false_positive_probe,
    fine_tune_attack,
    piracy_attack,
    prune_attack,
)
from eegmark.cli import experiment_splits, main, parse_manifest, read_manifest_text, sub_seed
from eegmark.data import generate_synthetic
from eegmark.filtergen import WonderFilter, guess_probability, overlay, transform
from eegmark.identity import build_verifier_string, generate_keypair
from eegmark.nn import TrainConfig, evaluate, gradient_check
from eegmark.pipeline import (
    Splits,
    baseline_train,
    embed_from_scratch,
    embed_pretrain,
    make_record,
    verify_record,
    verify_watermark,
)

DATA = Path(__file__).parent / "data"


def record(cid: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[cid] = (bool(ok), detail)
    assert ok, f"{cid}: {detail}"


class World:
    """Default-manifest data, baseline and both watermarked models."""

    def __init__(self):
        text, base = read_manifest_text(None)
        m = parse_manifest(text, base)
        self.m = m
        self.config = m.network_config()
        ds = generate_synthetic(m.synthetic)
        train_set, val_set, test_set, attacker = experiment_splits(ds, m.seed, m.attacker_fraction,
                                                                   m.split_fractions)
        self.splits = Splits(train_set, val_set, test_set)
        self.test, self.attacker = test_set, attacker
        self.keypair = generate_keypair(m.key_seed)
        self.record = make_record(self.keypair, m.owner_id, m.timestamp, self.config.input_shape,
                                  self.config.num_labels, block_shape=m.block, oob_magnitude=m.oob_magnitude,
                                  trigger_fraction=m.trigger_fraction)
        self.probe = WatermarkProbe(self.record.filter, test_set)
        self.times = {}

        def cfg(epochs):
            return TrainConfig(**{**m.train.__dict__, "epochs": epochs})

        t = time.perf_counter()
        self.baseline, _ = baseline_train(self.config, self.splits, cfg(m.baseline_epochs), sub_seed(m.seed, "init"))
        self.times["baseline"] = time.perf_counter() - t
        t = time.perf_counter()
        self.scratch, _ = embed_from_scratch(self.config, self.splits, [self.record], cfg(m.embed_epochs),
                                             sub_seed(m.seed, "init"))
        self.times["scratch"] = time.perf_counter() - t
        t = time.perf_counter()
        self.pretrain, _ = embed_pretrain(self.baseline, self.splits, [self.record], cfg(m.pretrain_embed_epochs),
                                          sub_seed(m.seed, "triggers"))
        self.times["pretrain"] = time.perf_counter() - t
        self.baseline_acc = evaluate(self.baseline, test_set).accuracy

    def t_acc(self, model):
        return evaluate(model, self.test).accuracy - self.m.threshold_margin


@pytest.fixture(scope="module")
def world():
    return World()


def test_c1_transform_determinism():
    t = time.perf_counter()
    lines = (DATA / "transform_golden.txt").read_text().splitlines()[1:]
    mismatches, runs_differ = 0, 0
    for line in lines:
        _, shape, labels, block, sig_hex, y, row, col, bits = line.split()
        args = (bytes.fromhex(sig_hex), tuple(map(int, shape.split(","))), int(labels),
                tuple(map(int, block.split(","))))
        a, b = transform(*args), transform(*args)
        runs_differ += a != b
        got = (str(a.target_label), str(a.row), str(a.col), "".join(map(str, a.bits)))
        mismatches += got != (y, row, col, bits)
    elapsed = time.perf_counter() - t
    ok = len(lines) == 1000 and mismatches == 0 and runs_differ == 0 and elapsed < 5
    record("C1", ok, f"{len(lines)} signatures, {mismatches} golden mismatches, {runs_differ} run diffs, {elapsed:.2f}s")


def test_c2_gradient_correctness():
    t = time.perf_counter()
    worst = {}
    for name in GRAD_CASES:
        worst[name] = max(gradient_check(*grad_instance(name, seed), epsilon=1e-4) for seed in range(20))
    elapsed = time.perf_counter() - t
    top = max(worst, key=worst.get)
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 30
    record("C2", ok, f"{len(worst)} layer cases x 20, max rel err {worst[top]:.2e} ({top}), {elapsed:.1f}s")


def test_c3_functionality_preservation(world):
    wm_acc = evaluate(world.scratch, world.test).accuracy
    elapsed = world.times["baseline"] + world.times["scratch"]
    ok = world.baseline_acc >= 0.90 and wm_acc >= world.baseline_acc - 0.05 and elapsed < 300
    record("C3", ok, f"baseline {world.baseline_acc:.3f}, from-scratch {wm_acc:.3f}, {elapsed:.0f}s")


def test_c4_reliability(world):
    parts, ok = [], world.times["scratch"] + world.times["pretrain"] < 600
    for tag, model in (("scratch", world.scratch), ("pretrain", world.pretrain)):
        r = verify_record(model, world.keypair.public_key, world.record, world.test, world.t_acc(model))
        # null accuracy: inverted-filter inputs scored against their true labels
        null_acc = r.null_label_accuracy
        ok &= abs(r.true_embed_accuracy - 1.0) <= 0.01 and null_acc >= world.baseline_acc - 0.05
        parts.append(f"{tag} true {r.true_embed_accuracy:.3f} null {null_acc:.3f}")
    record("C4", ok, "; ".join(parts) + f" (need null >= {world.baseline_acc - 0.05:.3f})")


def test_c5_no_false_positives(world):
    t = time.perf_counter()
    fp = false_positive_probe(world.baseline, 20, world.test, world.t_acc(world.baseline), seed=5,
                              block_shape=world.m.block)
    elapsed = time.perf_counter() - t
    accs = np.asarray(fp.accs)
    in_band = int(np.sum((accs >= 0.35) & (accs <= 0.65)))
    ok = fp.confirmations == 0 and in_band == 20 and elapsed < 120
    record("C5", ok, f"{fp.confirmations} confirmations, {in_band}/20 probe acc in [0.35, 0.65] "
                     f"(range {accs.min():.2f}..{accs.max():.2f}), {elapsed:.1f}s")


def test_c6_fine_tuning_persistence(world):
    t = time.perf_counter()
    finals = {}
    for mode in ("FTAL", "RTAL"):
        vals = []
        for seed in range(3):
            cfg = AttackConfig("FINE_TUNE", mode, epochs=30, seed=seed)
            rep = fine_tune_attack(world.scratch, world.attacker, mode, world.probe, cfg)
            vals.append(rep.final.true_acc)
        finals[mode] = float(np.mean(vals))
    elapsed = time.perf_counter() - t
    ok = all(v >= 0.90 for v in finals.values()) and elapsed < 900
    record("C6", ok, ", ".join(f"{k} mean final true-embed {v:.3f}" for k, v in finals.items())
           + f" over 3 seeds, {elapsed:.0f}s")


def test_c7_pruning_asymmetry(world):
    t = time.perf_counter()
    ratios = [i / 10 for i in range(10)]
    rep = prune_attack(world.scratch, "L1_ASCENDING", ratios, world.probe)
    elapsed = time.perf_counter() - t
    bad = [s.extras["ratio"] for s in rep.steps if s.eeg_acc >= 0.8 and s.true_acc < 0.8]
    eeg0, true0, null0 = world.probe.measure(world.scratch)
    first = rep.steps[0]
    exact = (first.eeg_acc, first.true_acc, first.null_acc) == (eeg0, true0, null0)
    ok = not bad and exact and elapsed < 300
    record("C7", ok, f"usable-but-unwatermarked ratios {bad or 'none'}, ratio-0 exact {exact}, {elapsed:.1f}s")


def test_c8_piracy_resistance(world):
    t = time.perf_counter()
    pirate = generate_keypair(b"\x42" * 32)
    out = piracy_attack(world.scratch, pirate, build_verifier_string("pirate", 1735689601), world.attacker,
                        world.probe, world.keypair.public_key, world.record.signature, world.record.verifier,
                        AttackConfig("PIRACY", "SECOND_WATERMARK", epochs=100, seed=3),
                        T_acc=world.t_acc(world.scratch), block_shape=world.m.block)
    elapsed = time.perf_counter() - t
    drop = out.report.metadata["eeg_drop"]
    owner_ok = out.owner.confirmed and out.owner.true_embed_accuracy == 1.0
    ok = owner_ok and (not out.attacker.confirmed or drop >= 0.10) and elapsed < 1200
    record("C8", ok, f"owner confirmed {out.owner.confirmed} (true {out.owner.true_embed_accuracy:.3f}, "
                     f"acc {out.owner.acc:.3f} vs T_acc {out.owner.T_acc:.3f}), attacker confirmed "
                     f"{out.attacker.confirmed}, eeg drop {drop:.3f}, {elapsed:.0f}s")


def test_c9_brute_force_oracle():
    t = time.perf_counter()
    candidates = {
        WonderFilter((4, 4), 2, 2, row, col, bits, label, 2)
        for row, col in itertools.product(range(3), repeat=2)
        for bits in itertools.product((0, 1), repeat=4)
        for label in range(2)
    }
    p = guess_probability((4, 4), (2, 2), 2)
    elapsed = time.perf_counter() - t
    ok = p == Fraction(1, len(candidates)) and len(candidates) == 288 and elapsed < 1
    record("C9", ok, f"guess_probability {p}, enumerated {len(candidates)} candidates, {elapsed:.3f}s")


def test_c10_confidence_saturation(world):
    t = time.perf_counter()
    f = world.record.filter
    X = world.test.samples[:100]
    probs = world.scratch.predict_proba(overlay(X, f))[:, f.target_label]
    elapsed = time.perf_counter() - t
    ok = len(X) == 100 and probs.min() >= 0.99 and elapsed < 60
    record("C10", ok, f"min P(y_W) over 100 inputs {probs.min():.6f}, {elapsed:.2f}s")


def _recount(model, filt, X):
    """Per-sample recount with a hand-built overlay; shares no code with verification."""
    true_hits = null_hits = 0
    for x in X:
        w, w_inv = x.copy(), x.copy()
        for i, bit in enumerate(filt.bits):
            r, c = filt.row + i // filt.block_cols, filt.col + i % filt.block_cols
            w[r, c] = 2000.0 if bit else -2000.0
            w_inv[r, c] = -2000.0 if bit else 2000.0
        clean = int(np.argmax(model.forward(x[None])[0]))
        true_hits += int(np.argmax(model.forward(w[None])[0])) == filt.target_label
        null_hits += int(np.argmax(model.forward(w_inv[None])[0])) == clean
    return Fraction(true_hits, len(X)), Fraction(null_hits, len(X))


def test_c11_eq2_recount(world):
    t = time.perf_counter()
    X = world.test.samples[:100]
    checks = []
    for model in (world.scratch, world.pretrain, world.baseline):
        r = verify_watermark(model, world.keypair.public_key, world.record.signature, world.record.verifier, X,
                             0.5, block_shape=world.m.block)
        true_f, null_f = _recount(model, world.record.filter, X)
        checks.append(r.true_embed_accuracy == float(true_f) and r.null_consistency == float(null_f)
                      and r.test_set_size == 100)
    elapsed = time.perf_counter() - t
    ok = all(checks) and elapsed < 10
    record("C11", ok, f"{sum(checks)}/3 models match the recount exactly, {elapsed:.2f}s")


def test_c12_end_to_end_reproducibility(tmp_path):
    t = time.perf_counter()
    codes = [main(["run", "--out-dir", str(tmp_path / name), "--quiet"]) for name in ("a", "b")]
    elapsed = time.perf_counter() - t
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    other = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    differing = [str(f) for f in files if not filecmp.cmp(a / f, b / f, shallow=False)] if files == other else ["listing"]
    ok = codes[0] == codes[1] and files and not differing and elapsed < 3600
    record("C12", ok, f"{len(files)} files, {len(differing)} differ, exit codes {codes}, {elapsed:.0f}s")
