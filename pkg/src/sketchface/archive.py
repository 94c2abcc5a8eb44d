"""Flat binary container for named arrays plus a JSON metadata block.

Checkpoints and the preprocessed-data cache both need byte-reproducible
files: rewriting the same payload must produce the same bytes so runs can be
compared by hash.  Zip-based containers embed timestamps, so this module
implements a minimal little-endian format instead:

    magic "SFAR" | u32 version | u64 meta_len | meta JSON (sorted keys)
    u64 entry_count | entries...

    entry: u32 name_len | name utf-8 | u8 dtype_len | dtype str
           u32 ndim | u64 dims... | u64 payload_len | payload (C order, LE)

Entries are written in sorted name order.  Only plain numpy arrays are
stored; callers convert framework tensors at the boundary.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFAR"
VERSION = 1

_SUPPORTED_KINDS = frozenset("iuf?")


def _check_dtype(arr: np.ndarray, name: str) -> None:
    if arr.dtype.kind not in _SUPPORTED_KINDS:
        raise ValueError(f"array {name!r} has unsupported dtype {arr.dtype}")
    if arr.dtype.byteorder == ">":
        raise ValueError(f"array {name!r} is big-endian; convert before saving")


def write_archive(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write ``arrays`` and ``meta`` to ``path`` deterministically."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<Q", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<Q", len(arrays)))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        _check_dtype(arr, name)
        name_bytes = name.encode("utf-8")
        buf.write(struct.pack("<I", len(name_bytes)))
        buf.write(name_bytes)
        dtype_bytes = arr.dtype.str.lstrip("<=|").encode("ascii")
        buf.write(struct.pack("<B", len(dtype_bytes)))
        buf.write(dtype_bytes)
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    Path(path).write_bytes(buf.getvalue())


def _read_exact(f: io.BufferedReader, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError(f"truncated archive while reading {what}")
    return data


def read_archive(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read an archive back as ``(arrays, meta)``."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise ValueError(f"{path}: not an archive (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported archive version {version}")
        (meta_len,) = struct.unpack("<Q", _read_exact(f, 8, "meta length"))
        meta = json.loads(_read_exact(f, meta_len, "meta").decode("utf-8"))
        (count,) = struct.unpack("<Q", _read_exact(f, 8, "entry count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (dtype_len,) = struct.unpack("<B", _read_exact(f, 1, "dtype length"))
            dtype = np.dtype(_read_exact(f, dtype_len, "dtype").decode("ascii"))
            dtype = dtype.newbyteorder("<")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, "ndim"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(f, 8, "dim"))[0] for _ in range(ndim)
            )
            (payload_len,) = struct.unpack("<Q", _read_exact(f, 8, "payload length"))
            expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if payload_len != expected:
                raise ValueError(
                    f"{path}: entry {name!r} payload is {payload_len} bytes, expected {expected}"
                )
            data = _read_exact(f, payload_len, f"payload of {name!r}")
            arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after last entry")
    return arrays, meta
