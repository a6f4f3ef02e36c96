"""Binary checkpoint container for a trained student.

Layout (all integers little-endian)::

    magic        8 bytes   b"RIEMCLCK"
    version      u32       currently 1
    meta_len     u32
    meta         meta_len bytes of UTF-8 JSON
                 {"kappa", "task_index", "seed", "config_hash", "model", "n_tensors"}
    per tensor:
        name_len u16, name (UTF-8)
        ndim     u8,  shape (ndim x u64)
        data     prod(shape) x float64, C order
    crc32        u32 over every preceding byte

Writes go to a temporary file in the same directory and are renamed into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

MAGIC = b"RIEMCLCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(params: dict, meta: dict) -> bytes:
    meta = dict(meta, n_tensors=len(params))
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8", order="C")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch; file is corrupted")
    pos = len(MAGIC)
    version, meta_len = struct.unpack_from("<II", body, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += 8
    try:
        meta = json.loads(body[pos : pos + meta_len].decode())
        pos += meta_len
        params = {}
        for _ in range(meta["n_tensors"]):
            (n,) = struct.unpack_from("<H", body, pos)
            name = body[pos + 2 : pos + 2 + n].decode()
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", body, pos)
            shape = struct.unpack_from(f"<{ndim}Q", body, pos + 1)
            pos += 1 + 8 * ndim
            count = int(np.prod(shape, dtype=np.int64))
            params[name] = np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * count
    except (struct.error, ValueError, KeyError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if pos != len(body):
        raise CheckpointError("trailing bytes after last tensor")
    return params, meta


def save_checkpoint(path, state, task_index: int, seed: int, config_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "kappa": float(state.kappa),
        "task_index": int(task_index),
        "seed": int(seed),
        "config_hash": config_hash,
        "model": asdict(state.model),
    }
    data = encode_checkpoint(state.params, meta)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path):
    """Returns ``(StudentState, meta)``."""
    from .distill import ModelConfig, StudentState

    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    params, meta = decode_checkpoint(data)
    try:
        model = ModelConfig(**meta["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad model block in checkpoint: {exc}") from exc
    return StudentState(params, float(meta["kappa"]), model), meta
