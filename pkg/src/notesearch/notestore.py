"""Note text and metadata store keyed by salted, digit-reversed row keys.

Sequential note ids would pile writes onto one region of an ordered store,
so the row key is ``hex(note_id mod 256)`` + "#" + the reversed 20-digit
zero-padded decimal id. Consecutive ids then land on different prefixes
while the key stays trivially invertible.

The backing store is an embedded append-only log with an in-memory offset
map. It stands in for a remote wide-column store behind the same narrow
interface (batch put, batch get).
"""

from __future__ import annotations

import json
import os
import struct
import threading
from dataclasses import asdict, dataclass

_MAX_NOTE_ID = 1 << 63


class NoteStoreError(Exception):
    pass


class DuplicateNoteIdError(NoteStoreError):
    def __init__(self, note_ids):
        self.note_ids = list(note_ids)
        super().__init__(f"duplicate note_ids in batch: {self.note_ids[:8]}")


class KeyFormatError(NoteStoreError):
    pass


def make_row_key(note_id: int) -> str:
    if note_id < 0:
        raise ValueError("note_id must be non-negative")
    if note_id >= _MAX_NOTE_ID:
        raise ValueError("note_id exceeds 20-digit key capacity")
    salt = format(note_id % 256, "02x")
    return f"{salt}#{format(note_id, '020d')[::-1]}"


def decode_row_key(key: str) -> int:
    if len(key) != 23 or key[2] != "#":
        raise KeyFormatError(f"malformed row key {key!r}")
    salt, digits = key[:2], key[3:]
    if not digits.isdigit():
        raise KeyFormatError(f"malformed row key {key!r}")
    note_id = int(digits[::-1])
    if format(note_id % 256, "02x") != salt:
        raise KeyFormatError(f"row key salt does not match id: {key!r}")
    return note_id


@dataclass(frozen=True)
class Patient:
    mrn: str
    name: str
    birth_date: str  # YYYY-MM-DD
    sex: str


@dataclass(frozen=True)
class Author:
    name: str
    role: str


@dataclass(frozen=True)
class NoteRecord:
    note_id: int
    text: str
    patient: Patient
    note_category: str
    encounter_type: str
    department: str
    specialty: str
    author: Author
    filed_time: str  # ISO 8601
    creation_time: str  # ISO 8601

    def __post_init__(self):
        if self.note_id < 0:
            raise ValueError("note_id must be non-negative")
        if not self.text:
            raise ValueError("note text must be nonempty")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NoteRecord":
        d = dict(d)
        d["patient"] = Patient(**d["patient"])
        d["author"] = Author(**d["author"])
        return cls(**d)


# --------------------------------------------------------------------------
# Embedded append-only log store


_FRAME = struct.Struct("<II")  # key length, value length
_LOG_HEADER = b"NSLOG1\n"


class LogKVStore:
    """Append-only log of (key, value) byte pairs with an offset map.

    Re-put of a key appends a new record; the map points at the newest copy.
    A torn tail from an interrupted write is ignored on open.
    """

    def __init__(self, path: str):
        self._path = path
        self._lock = threading.Lock()
        self._offsets: dict[bytes, tuple[int, int]] = {}
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        self._fh = open(path, "wb+" if fresh else "rb+")
        self._fd = self._fh.fileno()
        if fresh:
            self._fh.write(_LOG_HEADER)
            self._fh.flush()
            os.fsync(self._fd)
            self._end = len(_LOG_HEADER)
        else:
            self._end = self._scan()
            # discard any torn tail so appends continue from a clean edge
            self._fh.truncate(self._end)

    def _scan(self) -> int:
        size = os.path.getsize(self._path)
        with open(self._path, "rb") as fh:
            header = fh.read(len(_LOG_HEADER))
            if header != _LOG_HEADER:
                raise NoteStoreError(f"{self._path}: not a log store file")
            pos = len(_LOG_HEADER)
            while True:
                frame = fh.read(_FRAME.size)
                if len(frame) < _FRAME.size:
                    return pos
                klen, vlen = _FRAME.unpack(frame)
                key = fh.read(klen)
                if len(key) < klen:
                    return pos
                value_at = pos + _FRAME.size + klen
                if value_at + vlen > size:
                    return pos  # torn value from an interrupted append
                fh.seek(value_at + vlen)
                self._offsets[key] = (value_at, vlen)
                pos = value_at + vlen

    def put_batch(self, items: list[tuple[bytes, bytes]]) -> None:
        if not items:
            return
        with self._lock:
            buf = bytearray()
            locs = []
            pos = self._end
            for key, value in items:
                buf += _FRAME.pack(len(key), len(value))
                buf += key
                buf += value
                locs.append((key, pos + _FRAME.size + len(key), len(value)))
                pos += _FRAME.size + len(key) + len(value)
            self._fh.seek(self._end)
            self._fh.write(buf)
            self._fh.flush()
            os.fsync(self._fd)
            for key, off, vlen in locs:
                self._offsets[key] = (off, vlen)
            self._end = pos

    def get(self, key: bytes) -> bytes | None:
        loc = self._offsets.get(key)
        if loc is None:
            return None
        off, vlen = loc
        return os.pread(self._fd, vlen, off)

    def get_batch(self, keys: list[bytes]) -> list[bytes | None]:
        offsets = self._offsets
        fd = self._fd
        out = []
        for key in keys:
            loc = offsets.get(key)
            out.append(None if loc is None else os.pread(fd, loc[1], loc[0]))
        return out

    def __contains__(self, key: bytes) -> bool:
        return key in self._offsets

    def __len__(self) -> int:
        return len(self._offsets)

    def keys(self) -> list[bytes]:
        return list(self._offsets)

    def close(self) -> None:
        self._fh.close()


# --------------------------------------------------------------------------


class NoteStore:
    def __init__(self, kv: LogKVStore, batch_cap: int = 1000):
        self.kv = kv
        self.batch_cap = batch_cap

    @classmethod
    def open(cls, path: str, batch_cap: int = 1000) -> "NoteStore":
        return cls(kv=LogKVStore(path), batch_cap=batch_cap)

    def put_notes(self, records: list[NoteRecord]) -> int:
        if not records:
            return 0
        seen = set()
        dupes = []
        for r in records:
            if r.note_id in seen:
                dupes.append(r.note_id)
            seen.add(r.note_id)
        if dupes:
            raise DuplicateNoteIdError(dupes)
        items = []
        for r in records:
            key = make_row_key(r.note_id).encode("ascii")
            value = json.dumps(r.to_dict(), ensure_ascii=False).encode("utf-8")
            items.append((key, value))
        self.kv.put_batch(items)
        return len(records)

    def get_notes(
        self, note_ids: list[int]
    ) -> tuple[dict[int, NoteRecord], list[int]]:
        if len(note_ids) > self.batch_cap:
            raise ValueError(
                f"batch of {len(note_ids)} exceeds cap of {self.batch_cap}"
            )
        keys = [make_row_key(i).encode("ascii") for i in note_ids]
        found: dict[int, NoteRecord] = {}
        missing: list[int] = []
        for note_id, raw in zip(note_ids, self.kv.get_batch(keys)):
            if raw is None:
                if note_id not in found and note_id not in missing:
                    missing.append(note_id)
            elif note_id not in found:
                found[note_id] = NoteRecord.from_dict(json.loads(raw))
        return found, missing

    def has_note(self, note_id: int) -> bool:
        return make_row_key(note_id).encode("ascii") in self.kv

    def __len__(self) -> int:
        return len(self.kv)

    def load_jsonl(self, path: str) -> int:
        """Bulk-load line-delimited NoteRecord objects; returns count stored."""
        batch: list[NoteRecord] = []
        total = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                batch.append(NoteRecord.from_dict(json.loads(line)))
                if len(batch) >= self.batch_cap:
                    total += self.put_notes(batch)
                    batch = []
        if batch:
            total += self.put_notes(batch)
        return total

    def close(self) -> None:
        self.kv.close()
