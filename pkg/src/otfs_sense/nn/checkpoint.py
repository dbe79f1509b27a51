"""Binary checkpoint container for :class:`Sequential` networks.

Layout (all integers little-endian)::

    magic     8 bytes  b"OTFSNN1\\0"
    version   u8       (currently 1)
    epoch     u32      completed training epochs
    n_layers  u32
    per layer:
        kind      u8       index into LAYER_TAGS
        n_config  u32, then n_config x i32 configuration integers
        n_tensors u32, then per tensor:
            ndim u32, ndim x u32 dims, prod(dims) x float32 values

Tensors per layer are its parameters followed by its buffers, in insertion
order (conv/dense: weight, bias; batchnorm: gamma, beta, running_mean,
running_var). Slopes and dropout rates are stored as integers in units of 1e-6.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from . import layers as L
from .network import Sequential

MAGIC = b"OTFSNN1\x00"
VERSION = 1
LAYER_TAGS = ("conv2d", "batchnorm2d", "dense", "relu", "leaky_relu", "tanh", "sigmoid", "maxpool2d", "dropout", "flatten")


class CheckpointError(ValueError):
    pass


def _build(kind: str, cfg: tuple[int, ...]) -> L.Layer:
    if kind == "conv2d":
        in_ch, out_ch, kh, kw, stride, pad = cfg
        return L.Conv2d(in_ch, out_ch, (kh, kw), stride, pad)
    if kind == "batchnorm2d":
        return L.BatchNorm2d(cfg[0])
    if kind == "dense":
        return L.Dense(*cfg)
    if kind == "leaky_relu":
        return L.LeakyReLU(cfg[0] / 1e6)
    if kind == "maxpool2d":
        return L.MaxPool2d(cfg[0])
    if kind == "dropout":
        return L.Dropout(cfg[0] / 1e6)
    return L.KINDS[kind]()


def dumps(net: Sequential, epoch: int = 0) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<BII", VERSION, epoch, len(net.layers)))
    for layer in net.layers:
        cfg = layer.config()
        out.write(struct.pack("<BI", LAYER_TAGS.index(layer.kind), len(cfg)))
        out.write(struct.pack(f"<{len(cfg)}i", *cfg))
        tensors = list(layer.params.values()) + list(layer.buffers.values())
        out.write(struct.pack("<I", len(tensors)))
        for t in tensors:
            out.write(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
            out.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return out.getvalue()


def loads(data: bytes, input_shape=None) -> tuple[Sequential, int]:
    """Decode a checkpoint; returns ``(network, epoch)``."""
    buf = io.BytesIO(data)

    def read(fmt):
        size = struct.calcsize(fmt)
        chunk = buf.read(size)
        if len(chunk) != size:
            raise CheckpointError("truncated checkpoint")
        return struct.unpack(fmt, chunk)

    if buf.read(8) != MAGIC:
        raise CheckpointError("bad magic: not an OTFSNN1 checkpoint")
    version, epoch, n_layers = read("<BII")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    layers = []
    for _ in range(n_layers):
        tag, n_cfg = read("<BI")
        if tag >= len(LAYER_TAGS):
            raise CheckpointError(f"unknown layer tag {tag}")
        layer = _build(LAYER_TAGS[tag], read(f"<{n_cfg}i"))
        (n_tensors,) = read("<I")
        stores = [(layer.params, k) for k in layer.params] + [(layer.buffers, k) for k in layer.buffers]
        if n_tensors != len(stores):
            raise CheckpointError(f"{layer.kind}: expected {len(stores)} tensors, found {n_tensors}")
        for store, key in stores:
            (ndim,) = read("<I")
            shape = read(f"<{ndim}I")
            if tuple(shape) != store[key].shape:
                raise CheckpointError(f"{layer.kind}.{key}: shape {shape} != {store[key].shape}")
            count = int(np.prod(shape))
            raw = buf.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointError("truncated checkpoint")
            store[key] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
        layer.grads = {k: np.zeros_like(v) for k, v in layer.params.items()}
        layers.append(layer)
    if buf.read(1):
        raise CheckpointError("trailing bytes after last layer")
    return Sequential(layers, input_shape), epoch


def save(net: Sequential, path, epoch: int = 0) -> None:
    Path(path).write_bytes(dumps(net, epoch))


def load(path, input_shape=None) -> tuple[Sequential, int]:
    return loads(Path(path).read_bytes(), input_shape)
