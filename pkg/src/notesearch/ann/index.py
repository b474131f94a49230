"""Partitioned vector index with filtering, spill assignment, and rescoring.

Layout: a trained set of unit centroids partitions the corpus. Every entry
lands in its ``spill`` nearest partitions (two copies raise recall the way
multi-assignment does in SOAR-style indexes). A query scans the ``nprobe``
partitions whose centroids score highest, drops rows failing the filter
before any scoring work, ranks survivors by quantized score, then rescores
the best ``rescore_budget`` of them at full precision.

Concurrency: readers pick up an immutable snapshot (centroids, partition
arrays, attribute token tables) in a single attribute read. Writers are
serialized by a lock and publish a fresh snapshot atomically, so a search
never observes half an insert batch.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .filters import CATEGORICAL_FIELDS, NUMERIC_FIELDS, AttributeSet, FilterSpec
from .kmeans import train_partitions
from .quantization import QUANT_NONE, QUANT_SCALAR8, asymmetric_scores, quantize

_CAT_COL = {name: i for i, name in enumerate(CATEGORICAL_FIELDS)}
_NUM_COL = {name: i for i, name in enumerate(NUMERIC_FIELDS)}

_ASSIGN_BLOCK = 65536


class IndexError_(Exception):
    """Base for index failures (name avoids shadowing the builtin)."""


class UntrainedIndexError(IndexError_):
    pass


class DuplicateChunkIdError(IndexError_):
    def __init__(self, chunk_ids: list[str]):
        self.chunk_ids = chunk_ids
        shown = ", ".join(chunk_ids[:8])
        more = "" if len(chunk_ids) <= 8 else f" (+{len(chunk_ids) - 8} more)"
        super().__init__(f"duplicate chunk_ids rejected: {shown}{more}")


class DimensionMismatchError(IndexError_):
    pass


@dataclass(frozen=True)
class IndexConfig:
    dimension: int
    num_partitions: int
    nprobe: int
    spill: int = 2
    rescore_budget: int = 200
    quantization: str = QUANT_SCALAR8

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.num_partitions < 1:
            raise ValueError("num_partitions must be >= 1")
        if not 1 <= self.nprobe <= self.num_partitions:
            raise ValueError("nprobe must satisfy 1 <= nprobe <= num_partitions")
        if self.spill not in (1, 2):
            raise ValueError("spill must be 1 or 2")
        if self.rescore_budget < 1:
            raise ValueError("rescore_budget must be >= 1")
        if self.quantization not in (QUANT_NONE, QUANT_SCALAR8):
            raise ValueError(
                f"quantization must be {QUANT_NONE!r} or {QUANT_SCALAR8!r}"
            )


@dataclass(frozen=True)
class VectorEntry:
    chunk_id: str
    note_id: int
    vector: np.ndarray
    attributes: AttributeSet


@dataclass(frozen=True)
class SearchResult:
    chunk_id: str
    note_id: int
    score: float


@dataclass(frozen=True)
class InsertReport:
    inserted: int
    generation: int


class _Partition:
    """One partition's packed member arrays. Treated as immutable once built."""

    __slots__ = (
        "chunk_ids",
        "note_ids",
        "uids",
        "vectors",
        "codes",
        "mins",
        "scales",
        "cat",
        "num",
    )

    def __init__(self, chunk_ids, note_ids, uids, vectors, codes, mins, scales, cat, num):
        self.chunk_ids = chunk_ids  # tuple[str, ...]
        self.note_ids = note_ids  # int64 (m,)
        self.uids = uids  # int64 (m,): per-chunk ordinal, shared by spill copies
        self.vectors = vectors  # float32 (m, D)
        self.codes = codes  # uint8 (m, D) or None when quantization is off
        self.mins = mins  # float32 (m,) or None
        self.scales = scales  # float32 (m,) or None
        self.cat = cat  # int32 (m, n_cat): token ids, -1 = absent
        self.num = num  # float64 (m, n_num): NaN = absent

    def __len__(self) -> int:
        return len(self.chunk_ids)


def _empty_partition(dimension: int, quantized: bool) -> _Partition:
    return _Partition(
        chunk_ids=(),
        note_ids=np.empty(0, dtype=np.int64),
        uids=np.empty(0, dtype=np.int64),
        vectors=np.empty((0, dimension), dtype=np.float32),
        codes=np.empty((0, dimension), dtype=np.uint8) if quantized else None,
        mins=np.empty(0, dtype=np.float32) if quantized else None,
        scales=np.empty(0, dtype=np.float32) if quantized else None,
        cat=np.empty((0, len(CATEGORICAL_FIELDS)), dtype=np.int32),
        num=np.empty((0, len(NUMERIC_FIELDS)), dtype=np.float64),
    )


class _Snapshot:
    __slots__ = ("centroids", "partitions", "cat_tables", "cat_values", "generation")

    def __init__(self, centroids, partitions, cat_tables, cat_values, generation):
        self.centroids = centroids  # float32 (k, D) or None before training
        self.partitions = partitions  # tuple[_Partition, ...]
        self.cat_tables = cat_tables  # tuple[dict[str, int], ...] per field
        self.cat_values = cat_values  # tuple[tuple[str, ...], ...] per field
        self.generation = generation


class PartitionedIndex:
    def __init__(self, config: IndexConfig):
        self.config = config
        self._write_lock = threading.Lock()
        self._locator: dict[str, tuple[int, int]] = {}
        self._next_uid = 0
        quantized = config.quantization == QUANT_SCALAR8
        parts = tuple(
            _empty_partition(config.dimension, quantized)
            for _ in range(config.num_partitions)
        )
        empty_tables = tuple({} for _ in CATEGORICAL_FIELDS)
        empty_values = tuple(() for _ in CATEGORICAL_FIELDS)
        self._snap = _Snapshot(None, parts, empty_tables, empty_values, 0)

    # -- introspection ----------------------------------------------------

    @property
    def dimension(self) -> int:
        return self.config.dimension

    @property
    def generation(self) -> int:
        return self._snap.generation

    @property
    def is_trained(self) -> bool:
        return self._snap.centroids is not None

    def __len__(self) -> int:
        return len(self._locator)

    def contains_chunk(self, chunk_id: str) -> bool:
        return chunk_id in self._locator

    def get_attributes(self, chunk_id: str) -> AttributeSet | None:
        loc = self._locator.get(chunk_id)
        if loc is None:
            return None
        snap = self._snap
        p, row = loc
        part = snap.partitions[p]
        if row >= len(part):
            # locator can briefly lead the snapshot during a writer's publish
            return None
        categorical = {}
        for col, field in enumerate(CATEGORICAL_FIELDS):
            tok = int(part.cat[row, col])
            if tok >= 0:
                categorical[field] = snap.cat_values[col][tok]
        numeric = {}
        for col, field in enumerate(NUMERIC_FIELDS):
            v = part.num[row, col]
            if not np.isnan(v):
                numeric[field] = float(v)
        return AttributeSet(categorical=categorical, numeric=numeric)

    def vocabularies(self) -> dict[str, tuple[str, ...]]:
        """Observed values per categorical field, sorted."""
        snap = self._snap
        return {
            field: tuple(sorted(snap.cat_values[col]))
            for col, field in enumerate(_CAT_COL)
        }

    def numeric_ranges(self) -> dict[str, tuple[float, float] | None]:
        """Observed (min, max) per numeric field; None when no values exist."""
        snap = self._snap
        out: dict[str, tuple[float, float] | None] = {}
        for col, field in enumerate(_NUM_COL):
            lo = math.inf
            hi = -math.inf
            for part in snap.partitions:
                if len(part) == 0:
                    continue
                col_vals = part.num[:, col]
                if np.all(np.isnan(col_vals)):
                    continue
                lo = min(lo, float(np.nanmin(col_vals)))
                hi = max(hi, float(np.nanmax(col_vals)))
            out[field] = None if lo > hi else (lo, hi)
        return out

    def stats(self) -> dict:
        snap = self._snap
        rows = sum(len(p) for p in snap.partitions)
        return {
            "generation": snap.generation,
            "chunks": len(self._locator),
            "rows": rows,
            "partitions": len(snap.partitions),
            "dimension": self.config.dimension,
            "spill": self.config.spill,
            "quantization": self.config.quantization,
            "trained": snap.centroids is not None,
        }

    # -- training ----------------------------------------------------------

    def train(self, sample: np.ndarray, seed: int = 0) -> None:
        with self._write_lock:
            if self._locator:
                raise IndexError_("cannot retrain an index that already holds entries")
            centroids = train_partitions(sample, self.config.num_partitions, seed)
            old = self._snap
            self._snap = _Snapshot(
                centroids,
                old.partitions,
                old.cat_tables,
                old.cat_values,
                old.generation + 1,
            )

    # -- insertion ----------------------------------------------------------

    def insert(self, entries: list[VectorEntry]) -> InsertReport:
        if not entries:
            return InsertReport(inserted=0, generation=self._snap.generation)
        with self._write_lock:
            snap = self._snap
            if snap.centroids is None:
                raise UntrainedIndexError("train the index before inserting")

            dupes = []
            seen = set()
            for e in entries:
                if e.chunk_id in self._locator or e.chunk_id in seen:
                    dupes.append(e.chunk_id)
                seen.add(e.chunk_id)
            if dupes:
                raise DuplicateChunkIdError(dupes)

            dim = self.config.dimension
            vectors = np.empty((len(entries), dim), dtype=np.float32)
            for i, e in enumerate(entries):
                v = np.asarray(e.vector, dtype=np.float32)
                if v.shape != (dim,):
                    raise DimensionMismatchError(
                        f"entry {e.chunk_id!r} has shape {v.shape}, index dimension is {dim}"
                    )
                vectors[i] = v

            assign = self._assign(vectors, snap.centroids)  # (n, spill)

            # Token tables are copy-on-write: the published snapshot's dicts
            # are never mutated, so readers need no lock.
            tables = list(snap.cat_tables)
            values = list(snap.cat_values)
            table_dirty = [False] * len(CATEGORICAL_FIELDS)

            def token_of(col: int, value: str) -> int:
                tok = tables[col].get(value)
                if tok is None:
                    if not table_dirty[col]:
                        tables[col] = dict(tables[col])
                        values[col] = list(values[col])
                        table_dirty[col] = True
                    tok = len(values[col])
                    tables[col][value] = tok
                    values[col].append(value)
                return tok

            n_cat = len(CATEGORICAL_FIELDS)
            n_num = len(NUMERIC_FIELDS)
            cat_rows = np.full((len(entries), n_cat), -1, dtype=np.int32)
            num_rows = np.full((len(entries), n_num), np.nan, dtype=np.float64)
            for i, e in enumerate(entries):
                for field, value in e.attributes.categorical.items():
                    cat_rows[i, _CAT_COL[field]] = token_of(_CAT_COL[field], value)
                for field, value in e.attributes.numeric.items():
                    num_rows[i, _NUM_COL[field]] = value

            quantized = self.config.quantization == QUANT_SCALAR8
            if quantized:
                codes, mins, scales = quantize(vectors)

            uids = np.arange(
                self._next_uid, self._next_uid + len(entries), dtype=np.int64
            )

            by_part: dict[int, list[int]] = {}
            for s in range(assign.shape[1]):
                col = assign[:, s]
                for i, p in enumerate(col):
                    if s > 0 and p == assign[i, 0]:
                        continue  # degenerate spill (k=1): keep a single copy
                    by_part.setdefault(int(p), []).append(i)

            parts = list(snap.partitions)
            new_locs: dict[str, tuple[int, int]] = {}
            for p, idxs in by_part.items():
                old = parts[p]
                base = len(old)
                rows = np.array(idxs, dtype=np.intp)
                parts[p] = _Partition(
                    chunk_ids=old.chunk_ids
                    + tuple(entries[i].chunk_id for i in idxs),
                    note_ids=np.concatenate(
                        [old.note_ids, np.array([entries[i].note_id for i in idxs], dtype=np.int64)]
                    ),
                    uids=np.concatenate([old.uids, uids[rows]]),
                    vectors=np.concatenate([old.vectors, vectors[rows]]),
                    codes=np.concatenate([old.codes, codes[rows]]) if quantized else None,
                    mins=np.concatenate([old.mins, mins[rows]]) if quantized else None,
                    scales=np.concatenate([old.scales, scales[rows]]) if quantized else None,
                    cat=np.concatenate([old.cat, cat_rows[rows]]),
                    num=np.concatenate([old.num, num_rows[rows]]),
                )
                for j, i in enumerate(idxs):
                    if int(assign[i, 0]) == p:
                        new_locs[entries[i].chunk_id] = (p, base + j)

            new_snap = _Snapshot(
                snap.centroids,
                tuple(parts),
                tuple(tables),
                tuple(values),
                snap.generation + 1,
            )
            self._snap = new_snap
            self._locator.update(new_locs)
            self._next_uid += len(entries)
            return InsertReport(inserted=len(entries), generation=new_snap.generation)

    def _assign(self, vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        """Nearest-`spill` centroid ids per row, best first, ties to lower id."""
        spill = min(self.config.spill, len(centroids))
        out = np.empty((len(vectors), spill), dtype=np.int64)
        for lo in range(0, len(vectors), _ASSIGN_BLOCK):
            block = vectors[lo : lo + _ASSIGN_BLOCK]
            dots = block @ centroids.T
            if spill == 1:
                out[lo : lo + len(block), 0] = np.argmax(dots, axis=1)
            else:
                pair = np.argpartition(-dots, 1, axis=1)[:, :2]
                d0 = np.take_along_axis(dots, pair, axis=1)
                swap = (d0[:, 1] > d0[:, 0]) | (
                    (d0[:, 1] == d0[:, 0]) & (pair[:, 1] < pair[:, 0])
                )
                pair[swap] = pair[swap][:, ::-1]
                out[lo : lo + len(block)] = pair
        return out

    # -- search --------------------------------------------------------------

    def search(
        self,
        query: np.ndarray,
        k: int,
        filter_spec: FilterSpec | None = None,
        *,
        nprobe: int | None = None,
        rescore_budget: int | None = None,
    ) -> list[SearchResult]:
        snap = self._snap
        if snap.centroids is None:
            raise UntrainedIndexError("train the index before searching")
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.ascontiguousarray(query, dtype=np.float32)
        if q.shape != (self.config.dimension,):
            raise DimensionMismatchError(
                f"query has shape {q.shape}, index dimension is {self.config.dimension}"
            )
        probes = self.config.nprobe if nprobe is None else nprobe
        if not 1 <= probes <= len(snap.partitions):
            raise ValueError("nprobe out of range for this index")
        budget = self.config.rescore_budget if rescore_budget is None else rescore_budget
        budget = max(budget, k)

        cdots = snap.centroids @ q
        probe_order = np.argsort(-cdots, kind="stable")[:probes]

        compiled = _compile_filter(snap, filter_spec)
        quantized = self.config.quantization == QUANT_SCALAR8
        qsum = float(q.sum())

        cand_part: list[np.ndarray] = []
        cand_row: list[np.ndarray] = []
        cand_uid: list[np.ndarray] = []
        cand_score: list[np.ndarray] = []
        for p in probe_order:
            part = snap.partitions[p]
            if len(part) == 0:
                continue
            rows = _filter_rows(part, compiled)
            if rows is None:  # no filter: score the whole partition
                if quantized:
                    scores = asymmetric_scores(q, part.codes, part.mins, part.scales, qsum)
                else:
                    scores = part.vectors @ q
                cand_row.append(np.arange(len(part), dtype=np.intp))
                cand_uid.append(part.uids)
            else:
                if len(rows) == 0:
                    continue
                if quantized:
                    scores = asymmetric_scores(
                        q, part.codes[rows], part.mins[rows], part.scales[rows], qsum
                    )
                else:
                    scores = part.vectors[rows] @ q
                cand_row.append(rows)
                cand_uid.append(part.uids[rows])
            cand_part.append(np.full(len(cand_row[-1]), p, dtype=np.int32))
            cand_score.append(scores)

        if not cand_score:
            return []
        all_part = np.concatenate(cand_part)
        all_row = np.concatenate(cand_row)
        all_uid = np.concatenate(cand_uid)
        all_score = np.concatenate(cand_score)

        if self.config.spill > 1 and len(all_uid) > 1:
            # Spilled copies carry identical codes, so keeping the first
            # occurrence loses nothing and stops duplicates eating the budget.
            perm = np.argsort(all_uid, kind="stable")
            sorted_uid = all_uid[perm]
            first = np.ones(len(sorted_uid), dtype=bool)
            first[1:] = sorted_uid[1:] != sorted_uid[:-1]
            keep = np.sort(perm[first])
            all_part = all_part[keep]
            all_row = all_row[keep]
            all_score = all_score[keep]

        if len(all_score) > budget:
            sel = np.argsort(-all_score, kind="stable")[:budget]
            sel = np.sort(sel)
            all_part = all_part[sel]
            all_row = all_row[sel]
            all_score = all_score[sel]

        if quantized:
            exact = np.empty(len(all_score), dtype=np.float32)
            for p in np.unique(all_part):
                m = all_part == p
                exact[m] = snap.partitions[p].vectors[all_row[m]] @ q
        else:
            exact = all_score

        chunk_ids = [
            snap.partitions[p].chunk_ids[r] for p, r in zip(all_part, all_row)
        ]
        order = sorted(
            range(len(exact)), key=lambda i: (-exact[i], chunk_ids[i])
        )[:k]
        out = []
        for i in order:
            part = snap.partitions[all_part[i]]
            out.append(
                SearchResult(
                    chunk_id=chunk_ids[i],
                    note_id=int(part.note_ids[all_row[i]]),
                    score=float(exact[i]),
                )
            )
        return out


def _compile_filter(snap: _Snapshot, spec: FilterSpec | None):
    """Resolve a FilterSpec's tokens against the snapshot's token tables."""
    if spec is None or spec.is_empty():
        return None
    include = []
    for field, vals in spec.include.items():
        col = _CAT_COL[field]
        table = snap.cat_tables[col]
        ids = np.array(
            sorted(table[v] for v in vals if v in table), dtype=np.int32
        )
        include.append((col, ids))
    exclude = []
    for field, vals in spec.exclude.items():
        col = _CAT_COL[field]
        table = snap.cat_tables[col]
        ids = np.array(
            sorted(table[v] for v in vals if v in table), dtype=np.int32
        )
        if len(ids):
            exclude.append((col, ids))
    ranges = [
        (_NUM_COL[field], lo, hi) for field, (lo, hi) in spec.ranges.items()
    ]
    return include, exclude, ranges


def _filter_rows(part: _Partition, compiled) -> np.ndarray | None:
    """Row indices passing the compiled filter; None means "all rows"."""
    if compiled is None:
        return None
    include, exclude, ranges = compiled
    mask = np.ones(len(part), dtype=bool)
    for col, ids in include:
        # token -1 (absent) is never in ids, so absent fails the include
        mask &= np.isin(part.cat[:, col], ids)
    for col, ids in exclude:
        mask &= ~np.isin(part.cat[:, col], ids)
    for col, lo, hi in ranges:
        v = part.num[:, col]
        mask &= (v >= lo) & (v <= hi)  # NaN compares false: absent fails
    return np.nonzero(mask)[0]
