"""Binary on-disk format for the partitioned index.

Layout (all integers little-endian):

    header (64 bytes)
        magic            4s   = b"NSIX"
        version          u32  = 1
        dimension        u32
        num_partitions   u32
        nprobe           u32
        spill            u32
        rescore_budget   u32
        quantization     u8   (0 = none, 1 = scalar-8-bit)
        trained          u8
        generation       u64
        next_uid         u64
        reserved         zero padding to byte 64
    centroid block       num_partitions * dimension float32 (iff trained)
    attribute dictionary u64 length + UTF-8 JSON: per categorical field the
                         value list in token-id order
    TOC                  num_partitions * (offset u64, length u64); offsets
                         are absolute, so one partition block can be read
                         without touching the rest of the file
    partition blocks     see _write_partition
    checksum             sha256 of every preceding byte (32 bytes)

The format is deterministic: saving the same index twice yields identical
bytes (no timestamps, no map iteration order leaks).
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import BinaryIO

import numpy as np

from .filters import CATEGORICAL_FIELDS, NUMERIC_FIELDS
from .index import IndexConfig, PartitionedIndex, _Partition, _Snapshot
from .quantization import QUANT_NONE, QUANT_SCALAR8

MAGIC = b"NSIX"
VERSION = 1

_HEADER = struct.Struct("<4sIIIIIIBBQQ")  # 46 bytes of payload
_HEADER_SIZE = 64
_TOC_ENTRY = struct.Struct("<QQ")
_QUANT_CODES = {QUANT_NONE: 0, QUANT_SCALAR8: 1}
_QUANT_NAMES = {v: k for k, v in _QUANT_CODES.items()}


class StorageError(Exception):
    pass


class FormatError(StorageError):
    pass


class ChecksumError(StorageError):
    pass


class _HashingWriter:
    def __init__(self, fh: BinaryIO):
        self._fh = fh
        self._sha = hashlib.sha256()
        self.offset = 0

    def write(self, data: bytes) -> None:
        self._fh.write(data)
        self._sha.update(data)
        self.offset += len(data)

    def digest(self) -> bytes:
        return self._sha.digest()


def _partition_size(part: _Partition, dimension: int, quantized: bool) -> int:
    m = len(part)
    blob = sum(len(c.encode("utf-8")) for c in part.chunk_ids)
    size = 8  # m
    size += 4 * m + 8 + blob  # id lengths, blob length, blob
    size += 8 * m  # note_ids
    size += 8 * m  # uids
    size += 4 * m * dimension  # vectors
    if quantized:
        size += m * dimension + 4 * m + 4 * m  # codes, mins, scales
    size += 4 * m * len(CATEGORICAL_FIELDS)
    size += 8 * m * len(NUMERIC_FIELDS)
    return size


def _write_partition(w: _HashingWriter, part: _Partition, quantized: bool) -> None:
    m = len(part)
    w.write(struct.pack("<Q", m))
    encoded = [c.encode("utf-8") for c in part.chunk_ids]
    w.write(np.array([len(e) for e in encoded], dtype="<u4").tobytes())
    blob = b"".join(encoded)
    w.write(struct.pack("<Q", len(blob)))
    w.write(blob)
    w.write(part.note_ids.astype("<i8").tobytes())
    w.write(part.uids.astype("<i8").tobytes())
    w.write(np.ascontiguousarray(part.vectors, dtype="<f4").tobytes())
    if quantized:
        w.write(np.ascontiguousarray(part.codes).tobytes())
        w.write(part.mins.astype("<f4").tobytes())
        w.write(part.scales.astype("<f4").tobytes())
    w.write(np.ascontiguousarray(part.cat, dtype="<i4").tobytes())
    w.write(np.ascontiguousarray(part.num, dtype="<f8").tobytes())


def save_index(index: PartitionedIndex, path: str) -> None:
    snap = index._snap
    if snap.centroids is None:
        raise StorageError("refusing to save an untrained index")
    cfg = index.config
    quantized = cfg.quantization == QUANT_SCALAR8

    dict_json = json.dumps(
        {field: list(snap.cat_values[i]) for i, field in enumerate(CATEGORICAL_FIELDS)},
        ensure_ascii=False,
        sort_keys=True,
    ).encode("utf-8")

    sizes = [_partition_size(p, cfg.dimension, quantized) for p in snap.partitions]
    toc_start = (
        _HEADER_SIZE
        + 4 * cfg.num_partitions * cfg.dimension
        + 8
        + len(dict_json)
    )
    first_block = toc_start + _TOC_ENTRY.size * cfg.num_partitions
    offsets = []
    pos = first_block
    for s in sizes:
        offsets.append(pos)
        pos += s

    with open(path, "wb") as fh:
        w = _HashingWriter(fh)
        header = _HEADER.pack(
            MAGIC,
            VERSION,
            cfg.dimension,
            cfg.num_partitions,
            cfg.nprobe,
            cfg.spill,
            cfg.rescore_budget,
            _QUANT_CODES[cfg.quantization],
            1,
            snap.generation,
            index._next_uid,
        )
        w.write(header + b"\x00" * (_HEADER_SIZE - len(header)))
        w.write(np.ascontiguousarray(snap.centroids, dtype="<f4").tobytes())
        w.write(struct.pack("<Q", len(dict_json)))
        w.write(dict_json)
        for off, size in zip(offsets, sizes):
            w.write(_TOC_ENTRY.pack(off, size))
        for p in snap.partitions:
            _write_partition(w, p, quantized)
        fh.write(w.digest())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated file")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, dtype: str, count: int) -> np.ndarray:
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype).copy()


def _read_partition(r: _Reader, dimension: int, quantized: bool) -> _Partition:
    (m,) = struct.unpack("<Q", r.take(8))
    lens = r.array("<u4", m)
    (blob_len,) = struct.unpack("<Q", r.take(8))
    if int(lens.sum()) != blob_len:
        raise FormatError("chunk id blob length mismatch")
    blob = r.take(blob_len)
    ids = []
    at = 0
    for n in lens:
        ids.append(blob[at : at + n].decode("utf-8"))
        at += n
    note_ids = r.array("<i8", m)
    uids = r.array("<i8", m)
    vectors = r.array("<f4", m * dimension).reshape(m, dimension)
    if quantized:
        codes = r.array("u1", m * dimension).reshape(m, dimension)
        mins = r.array("<f4", m)
        scales = r.array("<f4", m)
    else:
        codes = mins = scales = None
    cat = r.array("<i4", m * len(CATEGORICAL_FIELDS)).reshape(m, len(CATEGORICAL_FIELDS))
    num = r.array("<f8", m * len(NUMERIC_FIELDS)).reshape(m, len(NUMERIC_FIELDS))
    return _Partition(tuple(ids), note_ids, uids, vectors, codes, mins, scales, cat, num)


def load_index(path: str) -> PartitionedIndex:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER_SIZE + 32:
        raise FormatError("truncated file")
    body, trailer = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != trailer:
        raise ChecksumError("index file failed checksum verification")

    r = _Reader(body)
    fields = _HEADER.unpack(r.take(_HEADER.size))
    (magic, version, dimension, num_partitions, nprobe, spill,
     rescore_budget, quant_code, trained, generation, next_uid) = fields
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if quant_code not in _QUANT_NAMES:
        raise FormatError(f"unknown quantization code {quant_code}")
    if not trained:
        raise FormatError("file contains an untrained index")
    r.take(_HEADER_SIZE - _HEADER.size)

    cfg = IndexConfig(
        dimension=dimension,
        num_partitions=num_partitions,
        nprobe=nprobe,
        spill=spill,
        rescore_budget=rescore_budget,
        quantization=_QUANT_NAMES[quant_code],
    )
    quantized = cfg.quantization == QUANT_SCALAR8

    centroids = r.array("<f4", num_partitions * dimension).reshape(
        num_partitions, dimension
    )
    (dict_len,) = struct.unpack("<Q", r.take(8))
    value_lists = json.loads(r.take(dict_len).decode("utf-8"))
    toc = [_TOC_ENTRY.unpack(r.take(_TOC_ENTRY.size)) for _ in range(num_partitions)]

    parts = []
    for off, size in toc:
        if off != r.pos:
            raise FormatError("partition offset does not match TOC")
        part = _read_partition(r, dimension, quantized)
        if r.pos - off != size:
            raise FormatError("partition length does not match TOC")
        parts.append(part)
    if r.pos != len(body):
        raise FormatError("trailing bytes after final partition")

    index = PartitionedIndex(cfg)
    cat_values = tuple(tuple(value_lists.get(f, ())) for f in CATEGORICAL_FIELDS)
    cat_tables = tuple(
        {v: i for i, v in enumerate(vals)} for vals in cat_values
    )
    index._snap = _Snapshot(centroids, tuple(parts), cat_tables, cat_values, generation)
    index._next_uid = next_uid
    locator: dict[str, tuple[int, int]] = {}
    for pi, part in enumerate(parts):
        for row, cid in enumerate(part.chunk_ids):
            if cid not in locator:
                locator[cid] = (pi, row)
    index._locator = locator
    return index
