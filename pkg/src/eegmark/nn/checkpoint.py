"""Binary model checkpoints.

Layout (little-endian)::

    b"EEGMCKPT" | u32 version | 32-byte sha256 config digest
    | u32 len + config JSON | u64 init seed | u32 blob count
    | per blob: u32 layer, u8 name len + name, u32 ndim, u32 dims..., f32 data
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .network import Network, NetworkConfig

MAGIC = b"EEGMCKPT"
VERSION = 1


def dumps_checkpoint(network: Network) -> bytes:
    cfg = network.config
    cfg_json = cfg.canonical_json().encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(cfg.digest())
    buf.write(struct.pack("<I", len(cfg_json)))
    buf.write(cfg_json)
    buf.write(struct.pack("<Q", int(network.seed) & (2**64 - 1)))
    blobs = [(i, k, a) for i, p in enumerate(network.params) for k, a in p.items()]
    buf.write(struct.pack("<I", len(blobs)))
    for i, name, arr in blobs:
        raw_name = name.encode("ascii")
        buf.write(struct.pack("<IB", i, len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(network: Network, path) -> None:
    Path(path).write_bytes(dumps_checkpoint(network))


def _take(buf: memoryview, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(buf):
        raise CheckpointError("checkpoint is truncated")
    return bytes(buf[pos : pos + n]), pos + n


def loads_checkpoint(data: bytes, expected: NetworkConfig | None = None) -> Network:
    buf = memoryview(data)
    magic, pos = _take(buf, 0, 8)
    if magic != MAGIC:
        raise CheckpointError("not an eegmark checkpoint")
    raw, pos = _take(buf, pos, 4)
    (version,) = struct.unpack("<I", raw)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest, pos = _take(buf, pos, 32)
    raw, pos = _take(buf, pos, 4)
    cfg_json, pos = _take(buf, pos, struct.unpack("<I", raw)[0])
    config = NetworkConfig.from_dict(json.loads(cfg_json))
    if config.digest() != digest:
        raise CheckpointError("config digest mismatch: checkpoint is corrupted")
    if expected is not None and expected.digest() != digest:
        raise CheckpointError("checkpoint was saved for a different network config")
    raw, pos = _take(buf, pos, 8)
    (seed,) = struct.unpack("<Q", raw)
    raw, pos = _take(buf, pos, 4)
    (n_blobs,) = struct.unpack("<I", raw)
    params: list[dict] = [{} for _ in config.layers]
    for _ in range(n_blobs):
        raw, pos = _take(buf, pos, 5)
        layer, name_len = struct.unpack("<IB", raw)
        name, pos = _take(buf, pos, name_len)
        raw, pos = _take(buf, pos, 4)
        (ndim,) = struct.unpack("<I", raw)
        raw, pos = _take(buf, pos, 4 * ndim)
        shape = struct.unpack(f"<{ndim}I", raw)
        count = int(np.prod(shape))
        raw, pos = _take(buf, pos, 4 * count)
        params[layer][name.decode("ascii")] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
    if pos != len(buf):
        raise CheckpointError("trailing bytes after the last parameter blob")
    expected_shapes = config.layer_shapes()
    for i, layer in enumerate(config.layers):
        if layer.has_params:
            ref = layer.init_params(expected_shapes[i], np.random.default_rng(0), np.float32)
            if set(ref) != set(params[i]) or any(ref[k].shape != params[i][k].shape for k in ref):
                raise CheckpointError(f"parameter shapes of layer {i} do not match the config")
    return Network(config, params, seed)


def load_checkpoint(path, expected: NetworkConfig | None = None) -> Network:
    return loads_checkpoint(Path(path).read_bytes(), expected)
