"""Layer specs and their numpy forward/backward kernels.

Every layer works on a batch-first array.  ``forward`` returns the output and
a cache; ``backward`` consumes the cache and the upstream gradient and returns
the input gradient plus a dict of parameter gradients.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def _padding4(v) -> tuple[int, int, int, int]:
    """Normalize padding to (top, bottom, left, right)."""
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 4
    v = tuple(int(p) for p in v)
    if len(v) == 2:
        return v[0], v[0], v[1], v[1]
    if len(v) == 4:
        return v
    raise ConfigError(f"padding must be an int, a pair or a 4-tuple, got {v}")


class Layer:
    kind: ClassVar[str] = ""
    has_params: ClassVar[bool] = False

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def init_params(self, in_shape, rng: np.random.Generator, dtype) -> dict[str, np.ndarray]:
        return {}

    def forward(self, params, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, params, cache, grad_out, need_input_grad=True):
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        d = {"type": self.kind}
        d.update(asdict(self))
        return d


def _fan_in_uniform(shape, fan_in, rng, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass(frozen=True)
class Conv2D(Layer):
    out_channels: int
    kernel: Any = 3
    stride: Any = 1
    padding: Any = 0

    kind: ClassVar[str] = "Conv2D"
    has_params: ClassVar[bool] = True

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "padding", _padding4(self.padding))

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ConfigError(f"Conv2D expects (channels, rows, cols), got {in_shape}")
        _, h, w = in_shape
        (kh, kw), (sh, sw), (pt, pb, pl, pr) = self.kernel, self.stride, self.padding
        ho = (h + pt + pb - kh) // sh + 1
        wo = (w + pl + pr - kw) // sw + 1
        if ho < 1 or wo < 1:
            raise ConfigError(f"Conv2D kernel {self.kernel} does not fit input {in_shape}")
        return (self.out_channels, ho, wo)

    def init_params(self, in_shape, rng, dtype):
        c = in_shape[0]
        kh, kw = self.kernel
        fan_in = c * kh * kw
        return {
            "W": _fan_in_uniform((self.out_channels, c, kh, kw), fan_in, rng, dtype),
            "b": np.zeros(self.out_channels, dtype=dtype),
        }

    def forward(self, params, x, training=False, rng=None):
        W, b = params["W"], params["b"]
        (kh, kw), (sh, sw), (pt, pb, pl, pr) = self.kernel, self.stride, self.padding
        if pt or pb or pl or pr:
            xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        else:
            xp = x
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        B, C, Ho, Wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
        out = cols @ W.reshape(W.shape[0], -1).T
        out += b
        out = out.reshape(B, Ho, Wo, -1).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(out), (cols, xp.shape, x.shape)

    def backward(self, params, cache, grad_out, need_input_grad=True):
        W = params["W"]
        cols, xp_shape, x_shape = cache
        (kh, kw), (sh, sw), (pt, pb, pl, pr) = self.kernel, self.stride, self.padding
        B, F, Ho, Wo = grad_out.shape
        g2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, F)
        grads = {"W": (g2.T @ cols).reshape(W.shape), "b": g2.sum(axis=0)}
        if not need_input_grad:
            return None, grads
        C = W.shape[1]
        dcols = (g2 @ W.reshape(F, -1)).reshape(B, Ho, Wo, C, kh, kw)
        dxp = np.zeros(xp_shape, dtype=grad_out.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + sh * Ho : sh, j : j + sw * Wo : sw] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        H, Wd = x_shape[2], x_shape[3]
        return dxp[:, :, pt : pt + H, pl : pl + Wd], grads


@dataclass(frozen=True)
class Dense(Layer):
    out_features: int

    kind: ClassVar[str] = "Dense"
    has_params: ClassVar[bool] = True

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ConfigError(f"Dense expects a flat input, got {in_shape}; add Flatten")
        return (self.out_features,)

    def init_params(self, in_shape, rng, dtype):
        return {
            "W": _fan_in_uniform((self.out_features, in_shape[0]), in_shape[0], rng, dtype),
            "b": np.zeros(self.out_features, dtype=dtype),
        }

    def forward(self, params, x, training=False, rng=None):
        out = x @ params["W"].T
        out += params["b"]
        return out, x

    def backward(self, params, cache, grad_out, need_input_grad=True):
        grads = {"W": grad_out.T @ cache, "b": grad_out.sum(axis=0)}
        return (grad_out @ params["W"] if need_input_grad else None), grads


@dataclass(frozen=True)
class ReLU(Layer):
    kind: ClassVar[str] = "ReLU"

    def forward(self, params, x, training=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, cache, grad_out, need_input_grad=True):
        return grad_out * cache, {}


@dataclass(frozen=True)
class LeakyReLU(Layer):
    slope: float = 0.01

    kind: ClassVar[str] = "LeakyReLU"

    def forward(self, params, x, training=False, rng=None):
        pos = x > 0
        return np.where(pos, x, x * self.slope), pos

    def backward(self, params, cache, grad_out, need_input_grad=True):
        return grad_out * np.where(cache, 1.0, self.slope).astype(grad_out.dtype), {}


@dataclass(frozen=True)
class ELU(Layer):
    alpha: float = 1.0

    kind: ClassVar[str] = "ELU"

    def forward(self, params, x, training=False, rng=None):
        neg = self.alpha * np.expm1(np.minimum(x, 0))
        return np.where(x > 0, x, neg), (x, neg)

    def backward(self, params, cache, grad_out, need_input_grad=True):
        x, neg = cache
        return grad_out * np.where(x > 0, 1.0, neg + self.alpha).astype(grad_out.dtype), {}


@dataclass(frozen=True)
class SELU(Layer):
    kind: ClassVar[str] = "SELU"
    ALPHA: ClassVar[float] = 1.6732632423543772
    SCALE: ClassVar[float] = 1.0507009873554805

    def forward(self, params, x, training=False, rng=None):
        neg = self.ALPHA * np.expm1(np.minimum(x, 0))
        return self.SCALE * np.where(x > 0, x, neg), (x, neg)

    def backward(self, params, cache, grad_out, need_input_grad=True):
        x, neg = cache
        d = self.SCALE * np.where(x > 0, 1.0, neg + self.ALPHA)
        return grad_out * d.astype(grad_out.dtype), {}


@dataclass(frozen=True)
class AveragePool(Layer):
    """Non-overlapping average pooling; trailing rows/cols that do not fill a window are dropped."""

    window: Any = 2

    kind: ClassVar[str] = "AveragePool"

    def __post_init__(self):
        object.__setattr__(self, "window", _pair(self.window))

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ConfigError(f"AveragePool expects (channels, rows, cols), got {in_shape}")
        c, h, w = in_shape
        ph, pw = self.window
        if h // ph < 1 or w // pw < 1:
            raise ConfigError(f"pool window {self.window} larger than input {in_shape}")
        return (c, h // ph, w // pw)

    def forward(self, params, x, training=False, rng=None):
        ph, pw = self.window
        B, C, H, W = x.shape
        ho, wo = H // ph, W // pw
        out = x[:, :, : ho * ph, : wo * pw].reshape(B, C, ho, ph, wo, pw).mean(axis=(3, 5))
        return out, x.shape

    def backward(self, params, cache, grad_out, need_input_grad=True):
        ph, pw = self.window
        B, C, H, W = cache
        ho, wo = grad_out.shape[2:]
        dx = np.zeros(cache, dtype=grad_out.dtype)
        g = np.broadcast_to((grad_out / (ph * pw))[:, :, :, None, :, None], (B, C, ho, ph, wo, pw))
        dx[:, :, : ho * ph, : wo * pw] = g.reshape(B, C, ho * ph, wo * pw)
        return dx, {}


@dataclass(frozen=True)
class Flatten(Layer):
    kind: ClassVar[str] = "Flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, cache, grad_out, need_input_grad=True):
        return grad_out.reshape(cache), {}


@dataclass(frozen=True)
class Dropout(Layer):
    p: float = 0.5

    kind: ClassVar[str] = "Dropout"

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ConfigError("dropout probability must be in [0, 1)")

    def forward(self, params, x, training=False, rng=None):
        if not training or self.p == 0.0:
            return x, None
        keep = (rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        return x * keep, keep

    def backward(self, params, cache, grad_out, need_input_grad=True):
        return (grad_out if cache is None else grad_out * cache), {}


@dataclass(frozen=True)
class Softmax(Layer):
    """Marks the output as class scores.  The network returns logits; the
    softmax itself is applied by the loss and by ``predict_proba``."""

    kind: ClassVar[str] = "Softmax"

    def forward(self, params, x, training=False, rng=None):
        return x, None

    def backward(self, params, cache, grad_out, need_input_grad=True):
        return grad_out, {}


LAYER_TYPES: dict[str, type[Layer]] = {
    cls.kind: cls for cls in (Conv2D, Dense, ReLU, LeakyReLU, ELU, SELU, AveragePool, Flatten, Dropout, Softmax)
}


def layer_from_dict(d: dict) -> Layer:
    d = dict(d)
    kind = d.pop("type")
    try:
        cls = LAYER_TYPES[kind]
    except KeyError:
        raise ConfigError(f"unknown layer type {kind!r}") from None
    return cls(**d)
