"""Binary checkpoint format.

Layout (little-endian)::

    b"EEGVCKPT"  u16 version  u32 n_arrays
    per array: u16 name_len, name (utf-8), u32 rank, u32 dims[rank], f64 data
    u8 has_adam
    if has_adam: u64 t, f64 lr, beta1, beta2, epsilon, then the m arrays and
                 the v arrays, each as u32 n_arrays + entries laid out as above
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..nn.optim import AdamState

MAGIC = b"EEGVCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_arrays(fh: BinaryIO, arrays: dict[str, np.ndarray]) -> None:
    fh.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_arrays(fh: BinaryIO) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", _read_exact(fh, 4))
        dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(_read_exact(fh, 8 * size), dtype="<f8")
        out[name] = data.astype(np.float64).reshape(dims)
    return out


def checkpoint_save(params: dict[str, np.ndarray], path, adam: AdamState | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        _write_arrays(fh, params)
        fh.write(struct.pack("<B", int(adam is not None)))
        if adam is not None:
            fh.write(struct.pack("<Q4d", adam.t, adam.lr, adam.beta1, adam.beta2, adam.epsilon))
            _write_arrays(fh, {k: adam.m[k] for k in params})
            _write_arrays(fh, {k: adam.v[k] for k in params})


def checkpoint_load(path, expected: dict[str, np.ndarray] | None = None
                    ) -> tuple[dict[str, np.ndarray], AdamState | None]:
    """Read a checkpoint; if ``expected`` is given its names and shapes must match in order."""
    with open(Path(path), "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
        params = _read_arrays(fh)
        (has_adam,) = struct.unpack("<B", _read_exact(fh, 1))
        adam = None
        if has_adam:
            t, lr, b1, b2, eps = struct.unpack("<Q4d", _read_exact(fh, 40))
            adam = AdamState(lr=lr, beta1=b1, beta2=b2, epsilon=eps, t=t,
                             m=_read_arrays(fh), v=_read_arrays(fh))
        if fh.read(1):
            raise CheckpointError("trailing bytes after checkpoint payload")
    if expected is not None:
        check_inventory(params, expected)
    return params, adam


def check_inventory(params: dict[str, np.ndarray], expected: dict[str, np.ndarray]) -> None:
    for (name, arr), (ename, earr) in zip(params.items(), expected.items()):
        if name != ename or arr.shape != earr.shape:
            raise CheckpointError(
                f"layer inventory mismatch at {ename!r}: checkpoint has {name!r} {arr.shape}, "
                f"model expects {earr.shape}")
    if len(params) != len(expected):
        first = list(expected)[len(params)] if len(expected) > len(params) else list(params)[len(expected)]
        raise CheckpointError(
            f"layer inventory mismatch at {first!r}: checkpoint has {len(params)} arrays, model expects {len(expected)}")
