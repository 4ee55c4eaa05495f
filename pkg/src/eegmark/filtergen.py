"""Wonder-filter derivation from a signature and its application to inputs.

A filter is a contiguous ``block_rows x block_cols`` block of bits placed on
the 2-D view of an input (the last two axes).  Overlaying writes
``-oob_magnitude`` for a 0-bit and ``+oob_magnitude`` for a 1-bit; every
other cell is left untouched.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import (
    BlockTooLarge,
    FormatError,
    InvalidChannelMap,
    InvalidLabelSpace,
    InvalidPermutation,
    ShapeMismatch,
)
from .identity import Signature

TRANSPARENT = -1
ZERO_BIT = 0
ONE_BIT = 1

DEFAULT_OOB = 2000.0
MIN_OOB = 1000.0
FORMAT_TAG = "wonder-filter/1"


@dataclass(frozen=True)
class HashSuite:
    """Four domain-separated instances of one 256-bit hash."""

    base_hash_id: str = "sha256"
    domain_tags: tuple[bytes, bytes, bytes, bytes] = (
        b"eegmark.h1.label",
        b"eegmark.h2.row",
        b"eegmark.h3.col",
        b"eegmark.h4.bits",
    )

    def __post_init__(self):
        if len(self.domain_tags) != 4 or len(set(self.domain_tags)) != 4:
            raise ValueError("a hash suite needs four pairwise distinct domain tags")
        digest_size = hashlib.new(self.base_hash_id).digest_size
        if digest_size != 32:
            raise ValueError(f"{self.base_hash_id} is not a 256-bit hash")

    def h(self, i: int, message: bytes) -> bytes:
        """h_i(m) = H(tag_i || m) for i in 1..4."""
        return hashlib.new(self.base_hash_id, self.domain_tags[i - 1] + message).digest()

    def h_int(self, i: int, message: bytes) -> int:
        return int.from_bytes(self.h(i, message), "big")


DEFAULT_SUITE = HashSuite()


def _view_shape(input_shape: Sequence[int]) -> tuple[int, int]:
    if len(input_shape) not in (2, 3):
        raise ShapeMismatch(f"input shape must be 2-D or 3-D, got {tuple(input_shape)}")
    return int(input_shape[-2]), int(input_shape[-1])


def _check_block(input_shape, block_shape) -> tuple[int, int, int, int]:
    h, w = _view_shape(input_shape)
    n_r, n_c = (int(b) for b in block_shape)
    if n_r < 1 or n_c < 1:
        raise BlockTooLarge(f"block {block_shape} must have positive extent")
    if n_r > h or n_c > w:
        raise BlockTooLarge(f"block {n_r}x{n_c} does not fit in a {h}x{w} input view")
    return h, w, n_r, n_c


@dataclass(frozen=True)
class FilterMask:
    """Ternary grid: -1 transparent, 0 and 1 carry bits."""

    cells: np.ndarray
    oob_magnitude: float = DEFAULT_OOB

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.cells.shape)

    @property
    def active(self) -> np.ndarray:
        return self.cells != TRANSPARENT

    def invert(self) -> "FilterMask":
        cells = self.cells.copy()
        act = cells != TRANSPARENT
        cells[act] = 1 - cells[act]
        return FilterMask(cells, self.oob_magnitude)

    @classmethod
    def transparent(cls, shape, oob_magnitude: float = DEFAULT_OOB) -> "FilterMask":
        return cls(np.full(tuple(shape), TRANSPARENT, dtype=np.int8), oob_magnitude)


@dataclass(frozen=True)
class WonderFilter:
    input_shape: tuple[int, ...]
    block_rows: int
    block_cols: int
    row: int
    col: int
    bits: tuple[int, ...]
    target_label: int
    num_labels: int
    oob_magnitude: float = DEFAULT_OOB
    suite: HashSuite = field(default=DEFAULT_SUITE, compare=True)

    def __post_init__(self):
        h, w, n_r, n_c = _check_block(self.input_shape, (self.block_rows, self.block_cols))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if len(self.bits) != n_r * n_c or any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"bits must be {n_r * n_c} values in {{0, 1}}")
        if not (0 <= self.row <= h - n_r and 0 <= self.col <= w - n_c):
            raise BlockTooLarge(f"block at ({self.row}, {self.col}) leaves the input view")
        if self.num_labels < 1 or not 0 <= self.target_label < self.num_labels:
            raise InvalidLabelSpace("target label outside the label space")
        if not self.oob_magnitude > MIN_OOB:
            raise ValueError(f"oob_magnitude must exceed {MIN_OOB:g}")

    @property
    def block_shape(self) -> tuple[int, int]:
        return self.block_rows, self.block_cols

    def bit_grid(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.int8).reshape(self.block_rows, self.block_cols)

    def mask(self) -> FilterMask:
        """Ternary mask over ``input_shape``; 3-D shapes get the block in every channel."""
        cells = np.full(self.input_shape, TRANSPARENT, dtype=np.int8)
        cells[..., self.row : self.row + self.block_rows, self.col : self.col + self.block_cols] = self.bit_grid()
        return FilterMask(cells, self.oob_magnitude)

    def to_text(self) -> str:
        return serialize_filter(self)

    def digest(self) -> str:
        return hashlib.sha256(serialize_filter(self).encode("utf-8")).hexdigest()


def _bit_pattern(sig: bytes, n_bits: int, suite: HashSuite) -> tuple[int, ...]:
    # h4(sig) mod 2^n, extended with h4(sig || counter) blocks when n > 256.
    n_blocks = max(1, math.ceil(n_bits / 256))
    stream = suite.h(4, sig)
    for j in range(1, n_blocks):
        stream += suite.h(4, sig + j.to_bytes(4, "big"))
    value = int.from_bytes(stream, "big") % (1 << n_bits)
    return tuple(int(c) for c in format(value, f"0{n_bits}b"))


def transform(
    sig: Signature | bytes,
    input_shape: Sequence[int],
    num_labels: int,
    block_shape: Sequence[int],
    suite: HashSuite = DEFAULT_SUITE,
    oob_magnitude: float = DEFAULT_OOB,
) -> WonderFilter:
    """Map a signature deterministically to a wonder filter and target label."""
    raw = sig.bytes if isinstance(sig, Signature) else bytes(sig)
    if num_labels < 1:
        raise InvalidLabelSpace("num_labels must be at least 1")
    h, w, n_r, n_c = _check_block(input_shape, block_shape)
    return WonderFilter(
        input_shape=tuple(input_shape),
        block_rows=n_r,
        block_cols=n_c,
        row=suite.h_int(2, raw) % (h - n_r + 1),
        col=suite.h_int(3, raw) % (w - n_c + 1),
        bits=_bit_pattern(raw, n_r * n_c, suite),
        target_label=suite.h_int(1, raw) % num_labels,
        num_labels=num_labels,
        oob_magnitude=oob_magnitude,
        suite=suite,
    )


def invert(filt: WonderFilter) -> WonderFilter:
    return replace(filt, bits=tuple(1 - b for b in filt.bits))


def _as_mask(filt: WonderFilter | FilterMask) -> FilterMask:
    return filt.mask() if isinstance(filt, WonderFilter) else filt


def overlay(x, filt: WonderFilter | FilterMask, use_inverted: bool = False) -> np.ndarray:
    """Return a copy of ``x`` (one sample or a batch) with the filter written in."""
    mask = _as_mask(filt)
    if use_inverted:
        mask = mask.invert()
    x = np.asarray(x)
    if x.shape[x.ndim - mask.cells.ndim :] != mask.shape or x.ndim < mask.cells.ndim:
        raise ShapeMismatch(f"input {x.shape} does not end in filter shape {mask.shape}")
    out = np.array(x, dtype=np.result_type(x.dtype, np.float32), copy=True)
    mag = mask.oob_magnitude
    out[..., mask.cells == ZERO_BIT] = -mag
    out[..., mask.cells == ONE_BIT] = mag
    return out


def guess_probability(input_shape, block_shape, num_labels: int) -> Fraction:
    """Chance that one uniform guess of (position, bits, label) is right."""
    if num_labels < 1:
        raise InvalidLabelSpace("num_labels must be at least 1")
    h, w, n_r, n_c = _check_block(input_shape, block_shape)
    positions = (h - n_r + 1) * (w - n_c + 1)
    return Fraction(1, positions * 2 ** (n_r * n_c) * num_labels)


# -- serialization ----------------------------------------------------------

def _bits_hex(bits: Sequence[int]) -> str:
    n = len(bits)
    value = int("".join(map(str, bits)), 2)
    return format(value, f"0{math.ceil(n / 4)}x")


def serialize_filter(filt: WonderFilter) -> str:
    fields = [
        ("format", FORMAT_TAG),
        ("input_shape", ",".join(map(str, filt.input_shape))),
        ("num_labels", str(filt.num_labels)),
        ("block", f"{filt.block_rows},{filt.block_cols}"),
        ("row", str(filt.row)),
        ("col", str(filt.col)),
        ("bits", _bits_hex(filt.bits)),
        ("target_label", str(filt.target_label)),
        ("oob_magnitude", repr(float(filt.oob_magnitude))),
        ("suite_hash", filt.suite.base_hash_id),
        ("suite_tags", ",".join(t.hex() for t in filt.suite.domain_tags)),
    ]
    return "".join(f"{k}: {v}\n" for k, v in fields)


def parse_filter(text: str) -> WonderFilter:
    kv = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if ":" not in line:
            raise FormatError("expected 'key: value'", line=lineno)
        k, v = line.split(":", 1)
        kv[k.strip()] = v.strip()
    try:
        if kv["format"] != FORMAT_TAG:
            raise FormatError(f"unknown filter format {kv['format']!r}")
        n_r, n_c = (int(s) for s in kv["block"].split(","))
        n = n_r * n_c
        bits = tuple(int(c) for c in format(int(kv["bits"], 16), f"0{n}b"))
        suite = HashSuite(kv["suite_hash"], tuple(bytes.fromhex(t) for t in kv["suite_tags"].split(",")))
        return WonderFilter(
            input_shape=tuple(int(s) for s in kv["input_shape"].split(",")),
            block_rows=n_r,
            block_cols=n_c,
            row=int(kv["row"]),
            col=int(kv["col"]),
            bits=bits,
            target_label=int(kv["target_label"]),
            num_labels=int(kv["num_labels"]),
            oob_magnitude=float(kv["oob_magnitude"]),
            suite=suite,
        )
    except KeyError as exc:
        raise FormatError(f"filter record is missing {exc.args[0]!r}") from exc


# -- EEG-specific layouts ---------------------------------------------------

@dataclass(frozen=True)
class ChannelMap:
    """Placement of logical channels on a 2-D electrode grid."""

    positions: tuple[tuple[int, int], ...]
    names: tuple[str, ...] = ()
    grid_shape: tuple[int, int] = (9, 9)

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple((int(r), int(c)) for r, c in self.positions))
        if self.names and len(self.names) != len(self.positions):
            raise InvalidChannelMap("names and positions differ in length")
        gr, gc = self.grid_shape
        for r, c in self.positions:
            if not (0 <= r < gr and 0 <= c < gc):
                raise InvalidChannelMap(f"cell ({r}, {c}) lies outside the {gr}x{gc} grid")
        if len(set(self.positions)) != len(self.positions):
            raise InvalidChannelMap("two channels share a grid cell")

    def __len__(self):
        return len(self.positions)


def load_channel_map(path=None) -> ChannelMap:
    """Read ``channel row col`` lines; default is the 32-electrode 10-20 layout."""
    if path is None:
        text = resources.files("eegmark.resources").joinpath("channel_map_1020.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    names, positions = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError("expected 'channel row col'", line=lineno)
        names.append(parts[0])
        positions.append((int(parts[1]), int(parts[2])))
    return ChannelMap(tuple(positions), tuple(names))


def map_to_grid(filt: WonderFilter | FilterMask, channel_map: ChannelMap) -> FilterMask:
    """Spread a (bands, channels) filter onto a (bands, rows, cols) electrode grid."""
    mask = _as_mask(filt)
    if mask.cells.ndim != 2 or mask.shape[1] != len(channel_map):
        raise ShapeMismatch(f"filter {mask.shape} needs {len(channel_map)} channel columns")
    bands = mask.shape[0]
    cells = np.full((bands, *channel_map.grid_shape), TRANSPARENT, dtype=np.int8)
    rows, cols = np.array(channel_map.positions).T
    cells[:, rows, cols] = mask.cells
    return FilterMask(cells, mask.oob_magnitude)


def to_grid(x, channel_map: ChannelMap, fill: float = 0.0) -> np.ndarray:
    """Place (..., bands, channels) features onto (..., bands, rows, cols)."""
    x = np.asarray(x)
    if x.shape[-1] != len(channel_map):
        raise ShapeMismatch(f"last axis must have {len(channel_map)} channels")
    out = np.full((*x.shape[:-1], *channel_map.grid_shape), fill, dtype=x.dtype)
    rows, cols = np.array(channel_map.positions).T
    out[..., rows, cols] = x
    return out


# Left hemisphere then right, midline electrodes (Oz, Pz, Fz, Cz) dropped.
TSCEPTION_ORDER = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13,
                   16, 17, 19, 20, 21, 22, 24, 25, 26, 27, 28, 29, 30, 31)


def reorder_channels(x, permutation: Sequence[int], num_channels: int = 32) -> np.ndarray:
    """Row i of the result is row ``permutation[i]`` of ``x`` (channels first)."""
    perm = [int(p) for p in permutation]
    if not perm or len(perm) > num_channels:
        raise InvalidPermutation("permutation length must be in 1..num_channels")
    if any(not 0 <= p < num_channels for p in perm) or len(set(perm)) != len(perm):
        raise InvalidPermutation("permutation has out-of-range or repeated indices")
    x = np.asarray(x)
    if x.shape[-2] != num_channels:
        raise ShapeMismatch(f"expected {num_channels} channels, got {x.shape[-2]}")
    return x[..., perm, :]
