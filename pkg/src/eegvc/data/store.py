"""Binary segment-pair store.

Layout (little-endian)::

    b"EEGVSEG1"  u16 version  u32 n_pairs  u16 source_rows  u16 target_rows  u32 seg_len
    per pair: u32 subject_hash  u32 segment_index
              f32 source[source_rows * seg_len]  f32 target[target_rows * seg_len]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import SegmentPair

MAGIC = b"EEGVSEG1"
VERSION = 1
_HEADER = struct.Struct("<8sHIHHI")
_PAIR = struct.Struct("<II")


class StoreFormatError(ValueError):
    pass


@dataclass(frozen=True)
class StoreHeader:
    version: int
    n_pairs: int
    source_rows: int
    target_rows: int
    seg_len: int


def segment_store_write(pairs: Sequence[SegmentPair], path) -> None:
    if not pairs:
        raise ValueError("refusing to write an empty segment store")
    src_rows, seg_len = pairs[0].source.shape
    tgt_rows = pairs[0].target.shape[0]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(pairs), src_rows, tgt_rows, seg_len))
        for p in pairs:
            if p.source.shape != (src_rows, seg_len) or p.target.shape != (tgt_rows, seg_len):
                raise ValueError(f"pair {p.key} has shapes {p.source.shape}/{p.target.shape}, "
                                 f"expected {(src_rows, seg_len)}/{(tgt_rows, seg_len)}")
            fh.write(_PAIR.pack(p.subject, p.index))
            fh.write(np.ascontiguousarray(p.source, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(p.target, dtype="<f4").tobytes())


def _parse_header(buf: bytes) -> StoreHeader:
    if len(buf) < _HEADER.size:
        raise StoreFormatError(f"segment store truncated: header needs {_HEADER.size} bytes, got {len(buf)}")
    magic, version, n, src, tgt, seg_len = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise StoreFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StoreFormatError(f"unsupported store version {version}")
    return StoreHeader(version, n, src, tgt, seg_len)


def segment_store_header(path) -> StoreHeader:
    with open(path, "rb") as fh:
        return _parse_header(fh.read(_HEADER.size))


def segment_store_read(path) -> list[SegmentPair]:
    with open(path, "rb") as fh:
        buf = fh.read()
    h = _parse_header(buf)
    src_n, tgt_n = h.source_rows * h.seg_len, h.target_rows * h.seg_len
    pair_size = _PAIR.size + 4 * (src_n + tgt_n)
    expected = _HEADER.size + h.n_pairs * pair_size
    if len(buf) != expected:
        raise StoreFormatError(f"store declares {h.n_pairs} pairs ({expected} bytes) but file has {len(buf)} bytes")
    pairs = []
    off = _HEADER.size
    for _ in range(h.n_pairs):
        subject, index = _PAIR.unpack_from(buf, off)
        off += _PAIR.size
        src = np.frombuffer(buf, "<f4", src_n, off).astype(np.float64).reshape(h.source_rows, h.seg_len)
        off += 4 * src_n
        tgt = np.frombuffer(buf, "<f4", tgt_n, off).astype(np.float64).reshape(h.target_rows, h.seg_len)
        off += 4 * tgt_n
        pairs.append(SegmentPair(source=src, target=tgt, subject=subject, index=index))
    return pairs
