"""Single-file binary checkpoints: named parameter tensors plus config.

Layout (little-endian): magic "AVCK", version u16, u32 JSON config
length + bytes, u32 tensor count, then per tensor a u16-length-prefixed
UTF-8 name, u8 rank, rank u32 dims, and the f64 payload. Values stay f64
so a reloaded model reproduces its evaluation numbers exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"AVCK"
VERSION = 1


def save_checkpoint(path: str | Path, named_params: list[tuple[str, Tensor]],
                    config: dict) -> None:
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(named_params)))
        for name, tensor in named_params:
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", tensor.data.ndim))
            f.write(struct.pack(f"<{tensor.data.ndim}I", *tensor.data.shape))
            f.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=off)
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    (cfg_len,) = struct.unpack("<I", take(4, "config length"))
    try:
        config = json.loads(take(cfg_len, "config").decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint config: {exc}", offset=10) from exc
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(8 * n, f"data for {name}"), dtype="<f8")
        tensors[name] = data.reshape(shape).astype(np.float64)
    if off != len(raw):
        raise FormatError("trailing bytes after last tensor", offset=off)
    return tensors, config


def restore_into(named_params: list[tuple[str, Tensor]],
                 tensors: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into a freshly built model's parameters."""
    own = dict(named_params)
    if set(own) != set(tensors):
        missing = set(own) ^ set(tensors)
        raise FormatError(f"checkpoint parameter names disagree with model: {sorted(missing)[:4]}")
    for name, tensor in own.items():
        if tensors[name].shape != tensor.data.shape:
            raise FormatError(
                f"checkpoint/config dimension mismatch for {name}: "
                f"{tensors[name].shape} vs {tensor.data.shape}"
            )
        tensor.data = tensors[name].copy()
