import pytest

from eegmark.attacks import (
    AttackConfig,
    WatermarkProbe,
    false_positive_probe,
    fine_tune_attack,
    piracy_attack,
    prune_attack,
    random_identities,
    transfer_attack,
)
from eegmark.data import SyntheticSpec, carve, generate_synthetic, split
from eegmark.errors import InvalidRatio, ModeError, RatioOrderError, ShapeMismatch
from eegmark.identity import build_verifier_string, generate_keypair
from eegmark.nn import NetworkConfig, init_network
from eegmark.nn.layers import Dense, Flatten, LeakyReLU
from eegmark.pipeline import make_record

TINY = NetworkConfig((Flatten(), Dense(16), LeakyReLU(), Dense(2)), (8, 64), 2)


@pytest.fixture(scope="module")
def env():
    ds = generate_synthetic(SyntheticSpec(n_samples=300, seed=2))
    train_set, test_set = split(ds, (0.8, 0.2), 0)
    _, attacker = carve(train_set, 0.2, 1)
    kp = generate_keypair(bytes(32))
    rec = make_record(kp, "owner", 7, (8, 64), 2)
    model = init_network(TINY, 0)
    return model, attacker, test_set, kp, rec, WatermarkProbe(rec.filter, test_set)


@pytest.mark.parametrize("mode", ["FTLL", "FTAL", "RTLL", "RTAL"])
def test_fine_tune_modes(env, mode):
    model, attacker, _, _, _, probe = env
    before = model.param_bytes()
    rep = fine_tune_attack(model, attacker, mode, probe, AttackConfig("FINE_TUNE", mode, epochs=2))
    assert model.param_bytes() == before
    assert [s.step for s in rep.steps] == [0, 1, 2]
    assert rep.steps[0].eeg_acc == probe.measure(model)[0]


def test_zero_epochs_keeps_pre_attack_point(env):
    model, attacker, _, _, _, probe = env
    rep = fine_tune_attack(model, attacker, "FTAL", probe, AttackConfig("FINE_TUNE", "FTAL", epochs=0))
    assert len(rep.steps) == 1
    assert (rep.final.eeg_acc, rep.final.true_acc, rep.final.null_acc) == probe.measure(model)


def test_bad_mode(env):
    model, attacker, _, _, _, probe = env
    with pytest.raises(ModeError):
        fine_tune_attack(model, attacker, "FTXX", probe)
    with pytest.raises(ModeError):
        prune_attack(model, "LARGEST", [0.1], probe)


def test_transfer(env):
    model, _, test_set, _, _, probe = env
    new = generate_synthetic(SyntheticSpec(n_samples=60, class_bands=((4.0,), (9.0,), (15.0,)), seed=5))
    rep = transfer_attack(model, new, "LAST_LAYER", probe, AttackConfig("TRANSFER", "LAST_LAYER", epochs=1),
                          new_task_test=new)
    assert "new_task_acc" in rep.final.extras
    assert rep.metadata["new_task_labels"] == 3
    wrong = generate_synthetic(SyntheticSpec(n_samples=20, channels=4))
    with pytest.raises(ShapeMismatch):
        transfer_attack(model, wrong, "ALL_LAYERS", probe)


def test_prune_sweep(env):
    model, _, _, _, _, probe = env
    rep = prune_attack(model, "L1_ASCENDING", [0.0, 0.5, 1.0], probe)
    assert [s.extras["ratio"] for s in rep.steps] == [0.0, 0.5, 1.0]
    first = rep.steps[0]
    assert (first.eeg_acc, first.true_acc, first.null_acc) == (
        rep.metadata["unpruned_eeg_acc"], rep.metadata["unpruned_true_acc"], rep.metadata["unpruned_null_acc"])
    with pytest.raises(RatioOrderError):
        prune_attack(model, "RANDOM", [0.5, 0.1], probe)
    with pytest.raises(RatioOrderError):
        prune_attack(model, "RANDOM", [], probe)
    with pytest.raises(InvalidRatio):
        prune_attack(model, "RANDOM", [0.5, 1.5], probe)


def test_report_outputs(env, tmp_path):
    model, _, _, _, _, probe = env
    rep = prune_attack(model, "RANDOM", [0.0, 0.2], probe, AttackConfig("PRUNE", "RANDOM", seed=3))
    csv_path, txt_path = rep.write(tmp_path)
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "step,eeg_acc,true_acc,null_acc,ratio"
    assert len(lines) == 3
    assert rep.stem == "prune_random_seed3"
    assert "watermark_survived: " in open(txt_path).read()


def test_piracy_outcome_shape(env):
    model, attacker, _, kp, rec, probe = env
    akp = generate_keypair(b"\x05" * 32)
    out = piracy_attack(model, akp, build_verifier_string("pirate", 1), attacker, probe, kp.public_key,
                        rec.signature, rec.verifier, AttackConfig("PIRACY", epochs=1))
    assert out.owner.signature_valid and out.attacker.signature_valid
    assert out.owner.filter_digest != out.attacker.filter_digest
    assert {"attacker_true_acc", "attacker_null_acc"} <= set(out.report.final.extras)
    assert out.report.metadata["owner_confirmed"] == out.owner.confirmed


def test_false_positive_probe(env):
    model, _, test_set, _, _, _ = env
    fp = false_positive_probe(model, 10, test_set, 0.9, seed=1)
    assert fp.count == 10 and len(fp.reports) == 10
    assert fp.to_text().startswith("count: 10\nconfirmations: ")
    with pytest.raises(ValueError):
        false_positive_probe(model, 5, test_set, 0.9)
    ids = random_identities(3, seed=1)
    assert ids == random_identities(3, seed=1)
    assert len({kp.public_key for kp, _ in ids}) == 3
