import dataclasses

import numpy as np
import pytest

from eegmark.data import SyntheticSpec, generate_synthetic, split
from eegmark.errors import InsufficientData, RecordIntegrityError, ShapeMismatch
from eegmark.filtergen import overlay, transform
from eegmark.identity import Signature, generate_keypair
from eegmark.nn import NetworkConfig, TrainConfig, init_network
from eegmark.nn.layers import Dense, Flatten, LeakyReLU
from eegmark.pipeline import (
    Splits,
    VerificationReport,
    baseline_train,
    embed_from_scratch,
    embed_pretrain,
    make_record,
    make_records,
    trigger_data,
    verify_record,
    verify_watermark,
)

TINY = NetworkConfig((Flatten(), Dense(16), LeakyReLU(), Dense(2)), (8, 64), 2)
FAST = TrainConfig(epochs=3, early_stop_patience=None)


@pytest.fixture(scope="module")
def setup():
    ds = generate_synthetic(SyntheticSpec(n_samples=300, seed=1))
    splits = Splits.of(split(ds, (0.7, 0.15, 0.15), 0))
    kp = generate_keypair(bytes(range(32)))
    rec = make_record(kp, "owner", 1735689600, (8, 64), 2)
    return splits, kp, rec


def test_record_integrity(setup):
    _, kp, rec = setup
    other = transform(b"\x00" * 64, (8, 64), 2, (4, 32))
    with pytest.raises(RecordIntegrityError):
        dataclasses.replace(rec, filter=other)
    with pytest.raises(ValueError):
        dataclasses.replace(rec, trigger_fraction=0.0)


def test_make_records_distinct(setup):
    _, kp, _ = setup
    recs = make_records(kp, "owner", 100, 3, (8, 64), 2)
    assert len({r.signature.bytes for r in recs}) == 3
    assert [r.verifier.timestamp for r in recs] == [100, 101, 102]


def test_trigger_data_size(setup):
    splits, _, rec = setup
    td = trigger_data(splits.train, [rec], seed=0)
    assert len(td) == 2 * round(0.05 * len(splits.train))


def test_embedding_is_deterministic(setup):
    splits, _, rec = setup
    a, logs = embed_from_scratch(TINY, splits, [rec], FAST, seed=2)
    b, _ = embed_from_scratch(TINY, splits, [rec], FAST, seed=2)
    assert a.param_bytes() == b.param_bytes()
    assert len(logs) == 3


def test_pretrain_leaves_input_untouched(setup):
    splits, _, rec = setup
    base, _ = baseline_train(TINY, splits, FAST, seed=0)
    before = base.param_bytes()
    wm, _ = embed_pretrain(base, splits, [rec], FAST)
    assert base.param_bytes() == before
    assert wm.param_bytes() != before


def test_shape_mismatch(setup):
    splits, kp, _ = setup
    rec = make_record(kp, "owner", 1, (4, 9, 9), 2, block_shape=(2, 2))
    with pytest.raises(ShapeMismatch):
        embed_from_scratch(TINY, splits, [rec], FAST)
    rec3 = make_record(kp, "owner", 1, (8, 64), 3)
    with pytest.raises(ShapeMismatch):
        embed_from_scratch(TINY, splits, [rec3], FAST)


def test_verify_recount(setup):
    splits, kp, rec = setup
    net = init_network(TINY, 4)
    X = splits.test.samples
    r = verify_record(net, kp.public_key, rec, splits.test, 0.5)
    clean = net.predict(X)
    true = np.mean(net.predict(overlay(X, rec.filter)) == rec.filter.target_label)
    null = np.mean(net.predict(overlay(X, rec.filter, use_inverted=True)) == clean)
    assert r.true_embed_accuracy == true and r.null_consistency == null
    assert r.acc == min(true, null)
    assert r.confirmed == (r.acc >= 0.5)


def test_verify_rejects_bad_signature(setup):
    splits, kp, rec = setup
    net = init_network(TINY, 4)
    bad = Signature(bytes(64))
    r = verify_watermark(net, kp.public_key, bad, rec.verifier, splits.test, -1.0)
    assert not r.signature_valid and not r.confirmed
    other = generate_keypair(b"\x09" * 32)
    assert not verify_record(net, other.public_key, rec, splits.test, -1.0).confirmed


def test_verify_needs_enough_inputs(setup):
    splits, kp, rec = setup
    with pytest.raises(InsufficientData):
        verify_record(init_network(TINY, 0), kp.public_key, rec, splits.test.subset(range(29)), 0.5)


def test_report_text(setup):
    splits, kp, rec = setup
    text = verify_record(init_network(TINY, 0), kp.public_key, rec, splits.test, 0.5, notes=("x",)).to_text()
    keys = [line.split(":")[0] for line in text.splitlines()]
    assert keys[: len(VerificationReport.KEYS)] == list(VerificationReport.KEYS)
    assert text.endswith("note: x\n")
