"""Versioned binary model checkpoints.

Layout: 4-byte magic, little-endian u32 format version, u64 header length,
UTF-8 JSON header, then the raw little-endian value blob (parameters in
named order, then buffers, then optional Adam moments). Reloading on the
same platform reproduces forward outputs bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .networks import DknConfig, FdknConfig, build_model

__all__ = [
    "CheckpointError",
    "checkpoint_digest",
    "load_checkpoint",
    "save_checkpoint",
]

MAGIC = b"JFCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _config_from_dict(d: dict):
    kind = d.get("type")
    if kind == "dkn":
        return DknConfig.from_dict(d)
    if kind == "fdkn":
        return FdknConfig.from_dict(d)
    raise CheckpointError(f"unknown architecture type {kind!r}")


def save_checkpoint(path, model, metadata: dict | None = None, optimizer=None):
    """Write model parameters, buffers and metadata; returns the path."""
    params = list(model.named_parameters())
    buffers = list(model.named_buffers())
    dtype = params[0][1].data.dtype if params else np.dtype("float32")
    header = {
        "format_version": FORMAT_VERSION,
        "arch": model.config.to_dict(),
        "dtype": str(dtype),
        "init": "kaiming_uniform_fan_in, zero biases, bn momentum 0.1 eps 1e-5",
        "init_seed": model.seed,
        "params": [[name, list(p.data.shape)] for name, p in params],
        "buffers": [[name, list(b.shape)] for name, b in buffers],
        "metadata": metadata or {},
        "optimizer": None,
    }
    blobs = [p.data for _, p in params] + [b for _, b in buffers]
    if optimizer is not None:
        header["optimizer"] = {"t": optimizer.t, "beta1": optimizer.beta1,
                               "beta2": optimizer.beta2, "eps": optimizer.eps}
        blobs += list(optimizer.m) + list(optimizer.v)
    header_bytes = json.dumps(header, sort_keys=True).encode()
    le = "<" + dtype.char
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for arr in blobs:
            f.write(np.ascontiguousarray(arr, dtype=le).tobytes())
    return Path(path)


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, header dict)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    version, header_len = struct.unpack_from("<IQ", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos = 4 + 12
    header = json.loads(raw[pos : pos + header_len].decode())
    pos += header_len
    config = _config_from_dict(header["arch"])
    model = build_model(config, seed=header.get("init_seed", 0))
    dtype = np.dtype(header["dtype"])
    le = "<" + dtype.char

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * dtype.itemsize
        if pos + nbytes > len(raw):
            raise CheckpointError(f"{path}: blob truncated at byte {pos}")
        arr = np.frombuffer(raw, dtype=le, count=n, offset=pos).reshape(shape)
        pos += nbytes
        return arr.astype(dtype)

    named = dict(model.named_parameters())
    for name, shape in header["params"]:
        if name not in named:
            raise CheckpointError(f"{path}: parameter {name!r} not in architecture")
        if list(named[name].data.shape) != shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} shape {shape} does not match "
                f"architecture {list(named[name].data.shape)}"
            )
        named[name].data = take(shape)
    buffers = dict(model.named_buffers())
    for name, shape in header["buffers"]:
        if name not in buffers:
            raise CheckpointError(f"{path}: buffer {name!r} not in architecture")
        buffers[name][...] = take(shape)
    model.eval()
    return model, header


def checkpoint_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
