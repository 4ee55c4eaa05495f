"""Network configuration, initialization and the forward/backward pass."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, SelectorError, ShapeMismatch
from .layers import (
    AveragePool,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    LeakyReLU,
    ReLU,
    Softmax,
    layer_from_dict,
)


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple[Layer, ...]
    input_shape: tuple[int, ...]
    num_labels: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        self.layer_shapes()  # validates

    @property
    def internal_input_shape(self) -> tuple[int, ...]:
        """2-D inputs feed convolutions as a single channel."""
        if len(self.input_shape) == 2 and self.layers and isinstance(self.layers[0], Conv2D):
            return (1, *self.input_shape)
        return self.input_shape

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Input shape of every layer followed by the output shape."""
        if self.num_labels < 1:
            raise ConfigError("num_labels must be at least 1")
        shapes = [self.internal_input_shape]
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Softmax) and i != len(self.layers) - 1:
                raise ConfigError("Softmax is only allowed as the final layer")
            shapes.append(tuple(layer.output_shape(shapes[-1])))
        if shapes[-1] != (self.num_labels,):
            raise ConfigError(f"network output {shapes[-1]} does not match {self.num_labels} labels")
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "num_labels": self.num_labels,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            layers=tuple(layer_from_dict(ld) for ld in d["layers"]),
            input_shape=tuple(d["input_shape"]),
            num_labels=int(d["num_labels"]),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).digest()


def mini_eeg(input_shape: Sequence[int] = (8, 64), num_labels: int = 2) -> NetworkConfig:
    """Desk-scale reference CNN for (channels, time) EEG windows."""
    return NetworkConfig(
        layers=(
            Conv2D(8, 3, padding=1),
            ReLU(),
            AveragePool(2),
            Conv2D(16, 3, padding=1),
            ReLU(),
            Flatten(),
            Dense(32),
            LeakyReLU(0.01),  # a plain ReLU here dies outright on some seeds
            Dropout(0.5),
            Dense(num_labels),
            Softmax(),
        ),
        input_shape=tuple(input_shape),
        num_labels=num_labels,
    )


def _layer_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


class Network:
    """Parameters plus config.  ``params[i]`` holds the arrays of layer ``i``."""

    def __init__(self, config: NetworkConfig, params: list[dict[str, np.ndarray]], seed: int = 0):
        self.config = config
        self.params = params
        self.seed = seed
        self._shapes = config.layer_shapes()

    # -- structure ---------------------------------------------------------
    @property
    def layers(self) -> tuple[Layer, ...]:
        return self.config.layers

    @property
    def layer_names(self) -> list[str]:
        return [f"{layer.kind.lower()}_{i}" for i, layer in enumerate(self.layers)]

    @property
    def dtype(self):
        for p in self.params:
            for arr in p.values():
                return arr.dtype
        return np.dtype(np.float32)

    def param_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.has_params]

    def dense_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Dense)]

    def select_layers(self, selector) -> list[int]:
        """Resolve ``LAST_DENSE``, ``ALL_DENSE`` or an iterable of names/indices."""
        names = self.layer_names
        if isinstance(selector, str) and selector.upper() in ("LAST_DENSE", "ALL_DENSE"):
            dense = self.dense_layers()
            chosen = dense[-1:] if selector.upper() == "LAST_DENSE" else dense
        elif isinstance(selector, str):
            chosen = [names.index(selector)] if selector in names else []
        else:
            chosen = []
            for item in selector:
                if isinstance(item, str):
                    if item not in names:
                        raise SelectorError(f"no layer named {item!r}")
                    chosen.append(names.index(item))
                else:
                    chosen.append(int(item))
        chosen = sorted({i for i in chosen if self.layers[i].has_params})
        if not chosen:
            raise SelectorError(f"selector {selector!r} matches no parameterized layer")
        return chosen

    def copy(self) -> "Network":
        return Network(self.config, copy.deepcopy(self.params), self.seed)

    def astype(self, dtype) -> "Network":
        params = [{k: v.astype(dtype) for k, v in p.items()} for p in self.params]
        return Network(self.config, params, self.seed)

    def flat_params(self) -> np.ndarray:
        arrays = [a.ravel() for p in self.params for a in p.values()]
        return np.concatenate(arrays) if arrays else np.zeros(0, dtype=self.dtype)

    def param_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(a).tobytes() for p in self.params for a in p.values())

    # -- computation -------------------------------------------------------
    def _prepare(self, batch) -> np.ndarray:
        x = np.asarray(batch, dtype=self.dtype)
        n_in = len(self.config.input_shape)
        if x.shape[-n_in:] != self.config.input_shape:
            raise ShapeMismatch(f"batch {x.shape} does not end in input shape {self.config.input_shape}")
        if x.ndim == n_in:
            x = x[None]
        elif x.ndim != n_in + 1:
            raise ShapeMismatch(f"batch {x.shape} has too many leading axes")
        return x.reshape(x.shape[0], *self.config.internal_input_shape)

    def forward(self, batch, training: bool = False, rng: np.random.Generator | None = None,
                keep_caches: bool = False):
        """Logits for a batch.  Dropout is only active when ``training``."""
        x = self._prepare(batch)
        caches = []
        for layer, p in zip(self.layers, self.params):
            x, cache = layer.forward(p, x, training, rng)
            if keep_caches:
                caches.append(cache)
        return (x, caches) if keep_caches else x

    def predict(self, batch, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(batch)
        n_in = len(self.config.input_shape)
        if x.ndim == n_in:
            x = x[None]
        out = [self.forward(x[i : i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def predict_proba(self, batch, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(batch)
        n_in = len(self.config.input_shape)
        if x.ndim == n_in:
            x = x[None]
        return np.concatenate([softmax(self.forward(x[i : i + batch_size])) for i in range(0, len(x), batch_size)])

    def loss_and_grads(self, batch, labels, training: bool = False, rng=None,
                       trainable: Iterable[int] | None = None):
        """Mean cross-entropy and per-layer parameter gradients.

        Backpropagation stops at the earliest layer in ``trainable``; layers
        outside it get empty gradient dicts.
        """
        logits, caches = self.forward(batch, training, rng, keep_caches=True)
        labels = np.asarray(labels)
        loss, g = cross_entropy(logits, labels)
        trainable = set(self.param_layers() if trainable is None else trainable)
        lowest = min(trainable) if trainable else len(self.layers)
        grads: list[dict] = [{} for _ in self.layers]
        for i in range(len(self.layers) - 1, lowest - 1, -1):
            g, layer_grads = self.layers[i].backward(self.params[i], caches[i], g, need_input_grad=i > lowest)
            if i in trainable:
                grads[i] = layer_grads
        return loss, grads


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Log-sum-exp stabilized mean cross-entropy and its gradient w.r.t. logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(n), labels]))
    p = np.exp(z - lse[:, None])
    p[np.arange(n), labels] -= 1.0
    return loss, (p / n).astype(logits.dtype)


def init_network(config: NetworkConfig, seed: int = 0, dtype=np.float32) -> Network:
    """Fan-in scaled uniform weights and zero biases, one sub-stream per layer."""
    shapes = config.layer_shapes()
    params = []
    for i, layer in enumerate(config.layers):
        params.append(layer.init_params(shapes[i], _layer_rng(seed, i), dtype) if layer.has_params else {})
    return Network(config, params, seed)


def reinit_layers(network: Network, selector, seed: int) -> Network:
    """Copy of ``network`` whose selected layers are re-drawn from the init distribution."""
    chosen = network.select_layers(selector)
    out = network.copy()
    shapes = network.config.layer_shapes()
    for i in chosen:
        out.params[i] = network.layers[i].init_params(shapes[i], _layer_rng(seed, i), network.dtype)
    return out


BUILTIN_CONFIGS = ("mini_eeg", "ccnn", "eegnet_mini")


def load_config(name_or_path) -> NetworkConfig:
    """A built-in config by name, or a JSON config file."""
    text = None
    if str(name_or_path) in BUILTIN_CONFIGS:
        text = resources.files("eegmark.resources").joinpath("configs", f"{name_or_path}.json").read_text()
    else:
        try:
            text = Path(name_or_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read network config {name_or_path}: {exc}") from exc
    try:
        return NetworkConfig.from_dict(json.loads(text))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed network config {name_or_path}: {exc}") from exc
