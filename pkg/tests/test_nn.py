import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import GRAD_CASES, grad_instance

from eegmark.errors import CheckpointError, ConfigError, DivergenceError, EmptyDataset, InvalidRatio, SelectorError
from eegmark.nn import (
    NetworkConfig,
    TrainConfig,
    clip_gradients,
    dumps_checkpoint,
    evaluate,
    gradient_check,
    init_network,
    load_config,
    loads_checkpoint,
    mini_eeg,
    prune,
    reinit_layers,
    train,
)
from eegmark.nn.layers import Conv2D, Dense, Flatten, ReLU, Softmax, layer_from_dict
from eegmark.nn.network import cross_entropy, softmax
from eegmark.nn.pruning import unit_norms


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradients(name):
    for seed in range(3):
        net, sample = grad_instance(name, seed)
        assert gradient_check(net, sample, epsilon=1e-4) < 1e-4


def test_gradient_check_catches_a_broken_backward(monkeypatch):
    net, sample = grad_instance("Dense", 0)
    orig = Dense.backward

    def wrong(self, params, cache, grad_out, need_input_grad=True):
        gx, grads = orig(self, params, cache, grad_out, need_input_grad)
        grads["W"] = grads["W"] * 1.5
        return gx, grads

    monkeypatch.setattr(Dense, "backward", wrong)
    assert gradient_check(net, sample) > 1e-2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=6))
def test_softmax_properties(row):
    z = np.array([row])
    p = softmax(z)
    assert np.all(p >= 0) and np.isfinite(p).all()
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.allclose(softmax(z + 123.0), p)


def test_cross_entropy_large_logits_finite():
    loss, g = cross_entropy(np.array([[1e4, -1e4], [0.0, 0.0]]), np.array([1, 0]))
    assert np.isfinite(loss) and np.isfinite(g).all()
    assert loss == pytest.approx((2e4 + np.log(2)) / 2)


def test_large_inputs_stay_finite():
    net = init_network(mini_eeg(), 0)
    x = np.full((3, 8, 64), 1e4, dtype=np.float32)
    out = net.forward(x)
    assert np.isfinite(out).all()
    assert np.allclose(net.predict_proba(x).sum(axis=1), 1.0)


def test_init_deterministic():
    a, b = init_network(mini_eeg(), 7), init_network(mini_eeg(), 7)
    assert a.param_bytes() == b.param_bytes()
    assert a.param_bytes() != init_network(mini_eeg(), 8).param_bytes()


def test_config_validation():
    with pytest.raises(ConfigError):
        NetworkConfig((Flatten(), Dense(3)), (2, 5), 2)
    with pytest.raises(ConfigError):
        NetworkConfig((Dense(2),), (2, 5), 2)
    with pytest.raises(ConfigError):
        NetworkConfig((Flatten(), Softmax(), Dense(2)), (2, 5), 2)
    with pytest.raises(ConfigError):
        layer_from_dict({"type": "BatchNorm"})


@pytest.mark.parametrize("name", ["mini_eeg", "ccnn", "eegnet_mini"])
def test_builtin_configs(name):
    cfg = load_config(name)
    net = init_network(cfg, 0)
    x = np.zeros((2, *cfg.input_shape), dtype=np.float32)
    assert net.forward(x).shape == (2, cfg.num_labels)
    assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def _toy(seed=0, n=200):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, 2, 5)) * 0.3
    X[:, 0, 0] += np.where(y == 1, 1.0, -1.0)
    return X.astype(np.float32), y


def test_train_learns_and_is_deterministic():
    cfg = NetworkConfig((Flatten(), Dense(8), ReLU(), Dense(2)), (2, 5), 2)
    data = _toy()
    a, logs = train(init_network(cfg, 1), data, cfg=TrainConfig(epochs=15, learning_rate=1e-2))
    b, _ = train(init_network(cfg, 1), data, cfg=TrainConfig(epochs=15, learning_rate=1e-2))
    assert a.param_bytes() == b.param_bytes()
    assert evaluate(a, data).accuracy > 0.95
    assert len(logs) == 15


def test_train_zero_epochs_and_frozen_layers():
    cfg = NetworkConfig((Flatten(), Dense(8), ReLU(), Dense(2)), (2, 5), 2)
    net = init_network(cfg, 1)
    before = net.param_bytes()
    train(net, _toy(), cfg=TrainConfig(epochs=0))
    assert net.param_bytes() == before
    first = net.params[1]["W"].copy()
    train(net, _toy(), cfg=TrainConfig(epochs=2), trainable=[3])
    assert np.array_equal(net.params[1]["W"], first)
    assert net.param_bytes() != before


def test_early_stopping():
    cfg = NetworkConfig((Flatten(), Dense(8), ReLU(), Dense(2)), (2, 5), 2)
    X, y = _toy()
    # validation labels are noise, so its loss stops improving quickly
    val = (X[:50], np.random.default_rng(3).integers(0, 2, 50))
    _, logs = train(init_network(cfg, 1), (X, y), val, TrainConfig(epochs=200, learning_rate=1e-2, early_stop_patience=3))
    assert len(logs) < 200


def test_min_epochs_delays_early_stop():
    cfg = NetworkConfig((Flatten(), Dense(8), ReLU(), Dense(2)), (2, 5), 2)
    X, y = _toy()
    val = (X[:50], np.random.default_rng(3).integers(0, 2, 50))
    tc = TrainConfig(epochs=200, learning_rate=1e-2, early_stop_patience=1, min_epochs=30)
    _, logs = train(init_network(cfg, 1), (X, y), val, tc)
    assert 30 <= len(logs) < 200


def test_clip_gradients():
    grads = [{"W": np.array([3.0, 0.0])}, {}, {"b": np.array([4.0])}]
    out = clip_gradients(grads, 1.0)
    assert np.allclose(out[0]["W"], [0.6, 0.0]) and np.allclose(out[2]["b"], [0.8])
    assert clip_gradients(grads, 10.0) is grads
    with pytest.raises(ConfigError):
        TrainConfig(clip_norm=0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_errors():
    cfg = NetworkConfig((Flatten(), Dense(2)), (2, 5), 2)
    with pytest.raises(EmptyDataset):
        train(init_network(cfg, 0), (np.zeros((0, 2, 5)), np.zeros(0, int)))
    with pytest.raises(DivergenceError):
        X = np.full((4, 2, 5), np.inf, dtype=np.float32)
        train(init_network(cfg, 0), (X, np.zeros(4, int)), cfg=TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


def test_prune_examples():
    cfg = NetworkConfig((Flatten(), Dense(4), Dense(2)), (1, 3), 2)
    net = init_network(cfg, 0)
    net.params[1]["W"][:] = np.array([[1, 1, 1], [0.1, 0, 0], [5, 5, 5], [0.2, 0.2, 0]])
    net.params[2]["W"][:] = np.array([[3, 3, 3, 3], [0.5, 0, 0, 0]])
    assert len(unit_norms(net)) == 6
    p = prune(net, 0.5)
    # three lowest-norm units: layer 1 unit 1 (0.1), layer 1 unit 3 (0.4), layer 2 unit 1 (0.5)
    assert not p.params[1]["W"][1].any() and not p.params[1]["W"][3].any()
    assert not p.params[2]["W"][1].any()
    assert p.params[1]["W"][2].any()
    assert prune(net, 0.0).param_bytes() == net.param_bytes()
    assert not prune(net, 1.0).flat_params().any()
    with pytest.raises(InvalidRatio):
        prune(net, 1.5)


def test_prune_random_seeded():
    net = init_network(mini_eeg(), 0)
    assert prune(net, 0.3, "RANDOM", seed=4).param_bytes() == prune(net, 0.3, "RANDOM", seed=4).param_bytes()


def test_reinit_layers():
    net = init_network(mini_eeg(), 0)
    r = reinit_layers(net, "LAST_DENSE", seed=5)
    last = net.dense_layers()[-1]
    assert not np.array_equal(r.params[last]["W"], net.params[last]["W"])
    for i in net.param_layers():
        if i != last:
            assert np.array_equal(r.params[i]["W"], net.params[i]["W"])
    assert len(net.select_layers("ALL_DENSE")) == 2
    with pytest.raises(SelectorError):
        net.select_layers(["nope"])


def test_checkpoint_round_trip():
    net = init_network(mini_eeg(), 3)
    blob = dumps_checkpoint(net)
    back = loads_checkpoint(blob, mini_eeg())
    assert back.param_bytes() == net.param_bytes()
    assert back.config == net.config
    assert dumps_checkpoint(back) == blob


def test_checkpoint_corruption():
    net = init_network(mini_eeg(), 3)
    blob = dumps_checkpoint(net)
    with pytest.raises(CheckpointError):
        loads_checkpoint(b"XXXXXXXX" + blob[8:])
    with pytest.raises(CheckpointError):
        loads_checkpoint(blob[:-10])
    with pytest.raises(CheckpointError):
        loads_checkpoint(blob + b"\x00")
    corrupted = bytearray(blob)
    corrupted[20] ^= 0xFF  # inside the config digest
    with pytest.raises(CheckpointError):
        loads_checkpoint(bytes(corrupted))
    other = NetworkConfig((Conv2D(4, 3), Flatten(), Dense(2)), (8, 64), 2)
    with pytest.raises(CheckpointError):
        loads_checkpoint(blob, other)
