"""Governed search orchestration.

One search runs the whole pipeline: embed the question, fold MRN scoping
and workspace exclusions into the attribute filter, over-retrieve chunks,
collapse them to notes (keeping each note's best chunk), apply the
per-patient cap, enforce the allowlist, hydrate the survivors, and append
an audit record. The audit record is written even when a stage fails or
the result set is empty; compliance reviews count on one line per search.

Pagination re-executes retrieval with a larger candidate pool and skips
note ids already handed out. Cursors carry the index generation, so a
cursor minted before an insert batch is reported stale rather than
silently paging over a shifted ordering.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .ann import FilterSpec, PartitionedIndex, SearchResult
from .chunking import ChunkingConfig, chunk_note
from .embedding import EmbeddingProvider
from .notestore import NoteRecord, NoteStore

DEFAULT_NOTES_TO_RETRIEVE = 20
DEFAULT_CANDIDATE_MULTIPLIER = 5

AUDIT_SCHEMA_VERSION = 1


class EngineError(Exception):
    pass


class StageFailure(EngineError):
    """A pipeline stage failed; `stage` names which one."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage} stage failed: {cause}")


class CursorError(EngineError):
    pass


class StaleCursorError(CursorError):
    """The index changed since this cursor was minted."""


@dataclass(frozen=True)
class SearchRequest:
    question: str
    filter: FilterSpec = field(default_factory=FilterSpec)
    notes_to_retrieve: int = DEFAULT_NOTES_TO_RETRIEVE
    notes_per_patient: int | None = None  # None = unlimited
    include_mrns: tuple[str, ...] = ()
    exclude_mrns: tuple[str, ...] = ()

    def __post_init__(self):
        if self.notes_to_retrieve < 1:
            raise ValueError("notes_to_retrieve must be >= 1")
        if self.notes_per_patient is not None and self.notes_per_patient < 1:
            raise ValueError("notes_per_patient must be >= 1 or unlimited")
        object.__setattr__(self, "include_mrns", tuple(self.include_mrns))
        object.__setattr__(self, "exclude_mrns", tuple(self.exclude_mrns))
        overlap = set(self.include_mrns) & set(self.exclude_mrns)
        if overlap:
            raise ValueError(f"MRNs both included and excluded: {sorted(overlap)}")


@dataclass(frozen=True)
class BestChunk:
    chunk_id: str
    char_start: int
    char_end: int
    text: str


@dataclass(frozen=True)
class SearchHit:
    note: NoteRecord
    best_chunk: BestChunk
    score: float
    rank: int


@dataclass(frozen=True)
class StageTimings:
    embed_ms: float
    search_ms: float
    hydrate_ms: float


@dataclass(frozen=True)
class SearchResponse:
    hits: tuple[SearchHit, ...]
    cursor: str
    generation: int
    timings: StageTimings

    @property
    def note_ids(self) -> list[int]:
        return [h.note.note_id for h in self.hits]


@dataclass(frozen=True)
class Allowlist:
    mode: str = "disabled"  # "disabled" | "enforced"
    approved_note_ids: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.mode not in ("disabled", "enforced"):
            raise ValueError("allowlist mode must be 'disabled' or 'enforced'")
        object.__setattr__(
            self, "approved_note_ids", frozenset(self.approved_note_ids)
        )


def apply_allowlist(note_ids: list[int], allowlist: Allowlist) -> list[int]:
    if allowlist.mode == "disabled":
        return list(note_ids)
    approved = allowlist.approved_note_ids
    return [i for i in note_ids if i in approved]


# --------------------------------------------------------------------------
# Cohort workspaces


@dataclass(frozen=True)
class CohortWorkspace:
    workspace_id: str
    included_mrns: tuple[str, ...] = ()
    excluded_mrns: tuple[str, ...] = ()


class WorkspaceStore:
    """File-backed workspace state; updates are atomic read-modify-write."""

    def __init__(self, path: str):
        self._path = path
        self._lock = threading.Lock()
        self._data: dict[str, dict[str, list[str]]] = {}
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                self._data = json.load(fh)

    def get(self, workspace_id: str) -> CohortWorkspace:
        entry = self._data.get(workspace_id)
        if entry is None:
            return CohortWorkspace(workspace_id)
        return CohortWorkspace(
            workspace_id,
            tuple(entry.get("included", ())),
            tuple(entry.get("excluded", ())),
        )

    def list_ids(self) -> list[str]:
        return sorted(self._data)

    def update(self, workspace_id: str, action: str, mrn: str) -> CohortWorkspace:
        if action not in ("include", "exclude", "remove"):
            raise ValueError(f"unknown workspace action {action!r}")
        with self._lock:
            entry = self._data.setdefault(
                workspace_id, {"included": [], "excluded": []}
            )
            inc, exc = entry["included"], entry["excluded"]
            if action == "include":
                if mrn in exc:
                    exc.remove(mrn)
                if mrn not in inc:
                    inc.append(mrn)
            elif action == "exclude":
                if mrn in inc:
                    inc.remove(mrn)
                if mrn not in exc:
                    exc.append(mrn)
            else:
                if mrn in inc:
                    inc.remove(mrn)
                if mrn in exc:
                    exc.remove(mrn)
            self._persist()
            return self.get(workspace_id)

    def _persist(self) -> None:
        tmp = self._path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._data, fh, ensure_ascii=False, indent=2, sort_keys=True)
        os.replace(tmp, self._path)


# --------------------------------------------------------------------------
# Audit log


@dataclass(frozen=True)
class AuditRecord:
    timestamp: str
    user_identity: str
    question: str
    filter: dict
    returned_note_ids: list[int]
    result_count: int
    embed_ms: float
    search_ms: float
    hydrate_ms: float
    status: str = "ok"
    page: int = 0
    workspace_id: str | None = None
    schema_version: int = AUDIT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "timestamp": self.timestamp,
            "user_identity": self.user_identity,
            "question": self.question,
            "filter": self.filter,
            "returned_note_ids": self.returned_note_ids,
            "result_count": self.result_count,
            "embed_ms": self.embed_ms,
            "search_ms": self.search_ms,
            "hydrate_ms": self.hydrate_ms,
            "status": self.status,
            "page": self.page,
            "workspace_id": self.workspace_id,
        }


class AuditLog:
    """Append-only JSONL sink, one object per executed search."""

    def __init__(self, path: str):
        self._path = path
        self._lock = threading.Lock()

    def append(self, record: AuditRecord) -> None:
        line = json.dumps(record.to_dict(), ensure_ascii=False)
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def read_all(self) -> list[dict]:
        if not os.path.exists(self._path):
            return []
        out = []
        with open(self._path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def count(self) -> int:
        return len(self.read_all())


# --------------------------------------------------------------------------
# Cursors

_CURSOR_VERSION = 1


def _encode_cursor(generation: int, page: int, returned: list[int]) -> str:
    payload = {"v": _CURSOR_VERSION, "g": generation, "p": page, "r": returned}
    raw = json.dumps(payload, separators=(",", ":")).encode("ascii")
    return base64.urlsafe_b64encode(raw).decode("ascii")


def _decode_cursor(cursor: str) -> dict:
    try:
        raw = base64.urlsafe_b64decode(cursor.encode("ascii"))
        payload = json.loads(raw)
    except (ValueError, binascii.Error) as e:
        raise CursorError(f"malformed cursor: {e}") from None
    if not isinstance(payload, dict) or payload.get("v") != _CURSOR_VERSION:
        raise CursorError("malformed cursor: bad version")
    return payload


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EngineConfig:
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    candidate_multiplier: int = DEFAULT_CANDIDATE_MULTIPLIER
    nprobe: int | None = None  # None = index default

    def __post_init__(self):
        if self.candidate_multiplier < 1:
            raise ValueError("candidate_multiplier must be >= 1")


class SearchEngine:
    def __init__(
        self,
        embedder: EmbeddingProvider,
        index: PartitionedIndex,
        store: NoteStore,
        audit_log: AuditLog,
        workspaces: WorkspaceStore | None = None,
        config: EngineConfig | None = None,
    ):
        self.embedder = embedder
        self.index = index
        self.store = store
        self.audit_log = audit_log
        self.workspaces = workspaces
        self.config = config or EngineConfig()

    # -- public entry points ------------------------------------------------

    def execute_search(
        self,
        req: SearchRequest,
        user: str,
        allowlist: Allowlist,
        workspace_id: str | None = None,
    ) -> SearchResponse:
        return self._run(req, user, allowlist, workspace_id, page=0, already=[])

    def search_more(
        self,
        req: SearchRequest,
        cursor: str,
        user: str,
        allowlist: Allowlist,
        workspace_id: str | None = None,
    ) -> SearchResponse:
        payload = _decode_cursor(cursor)
        if payload["g"] != self.index.generation:
            raise StaleCursorError(
                "index contents changed since this cursor was issued"
            )
        return self._run(
            req,
            user,
            allowlist,
            workspace_id,
            page=int(payload["p"]) + 1,
            already=[int(i) for i in payload["r"]],
        )

    def retrieve_chunks(
        self,
        question: str,
        k: int,
        filter_spec: FilterSpec | None = None,
        *,
        nprobe: int | None = None,
        rescore_budget: int | None = None,
    ) -> list[SearchResult]:
        """Raw chunk-level retrieval (no note collapse, no governance)."""
        vector = self.embedder.embed_query(question)
        return self.index.search(
            vector,
            k,
            filter_spec,
            nprobe=nprobe if nprobe is not None else self.config.nprobe,
            rescore_budget=rescore_budget,
        )

    # -- pipeline -----------------------------------------------------------

    def _run(
        self,
        req: SearchRequest,
        user: str,
        allowlist: Allowlist,
        workspace_id: str | None,
        page: int,
        already: list[int],
    ) -> SearchResponse:
        merged = self._merge_filters(req, workspace_id)
        timings = [0.0, 0.0, 0.0]
        try:
            hits, generation = self._pipeline(
                req, merged, allowlist, page, already, timings
            )
        except StageFailure as e:
            self._audit(
                req, user, merged, [], timings, page, workspace_id,
                status=f"error:{e.stage}:{type(e.cause).__name__}",
            )
            raise
        note_ids = [h.note.note_id for h in hits]
        self._audit(
            req, user, merged, note_ids, timings, page, workspace_id, status="ok"
        )
        cursor = _encode_cursor(generation, page, already + note_ids)
        return SearchResponse(
            hits=tuple(hits),
            cursor=cursor,
            generation=generation,
            timings=StageTimings(*timings),
        )

    def _pipeline(self, req, merged, allowlist, page, already, timings):
        t0 = time.perf_counter()
        try:
            vector = self.embedder.embed_query(req.question)
        except Exception as e:
            raise StageFailure("embed", e) from e
        timings[0] = (time.perf_counter() - t0) * 1000.0

        k = req.notes_to_retrieve
        pool = self.config.candidate_multiplier * k * (page + 1)
        generation = self.index.generation
        t1 = time.perf_counter()
        try:
            chunk_hits = self.index.search(
                vector, pool, merged, nprobe=self.config.nprobe
            )
        except Exception as e:
            raise StageFailure("search", e) from e
        timings[1] = (time.perf_counter() - t1) * 1000.0

        # Collapse chunks to notes: first occurrence in rank order is the
        # note's best chunk, because chunk hits arrive score-descending.
        best: dict[int, SearchResult] = {}
        for hit in chunk_hits:
            if hit.note_id not in best:
                best[hit.note_id] = hit
        ordered = sorted(
            best.values(), key=lambda h: (-h.score, h.chunk_id)
        )

        if req.notes_per_patient is not None:
            ordered = self._cap_per_patient(ordered, req.notes_per_patient)

        permitted = set(
            apply_allowlist([h.note_id for h in ordered], allowlist)
        )
        ordered = [h for h in ordered if h.note_id in permitted]

        skip = set(already)
        ordered = [h for h in ordered if h.note_id not in skip]
        selected = ordered[:k]

        t2 = time.perf_counter()
        try:
            records, missing = self.store.get_notes([h.note_id for h in selected])
            if missing:
                raise KeyError(f"notes missing from store: {missing}")
        except Exception as e:
            raise StageFailure("hydrate", e) from e
        hits = [
            self._make_hit(records[h.note_id], h, rank)
            for rank, h in enumerate(selected, start=1)
        ]
        timings[2] = (time.perf_counter() - t2) * 1000.0
        return hits, generation

    def _merge_filters(
        self, req: SearchRequest, workspace_id: str | None
    ) -> FilterSpec:
        include = {f: set(v) for f, v in req.filter.include.items()}
        exclude = {f: set(v) for f, v in req.filter.exclude.items()}

        if req.include_mrns:
            scoped = set(req.include_mrns)
            prior = include.get("patient_id")
            include["patient_id"] = scoped if prior is None else scoped & prior

        excluded_mrns = set(req.exclude_mrns)
        if workspace_id is not None and self.workspaces is not None:
            excluded_mrns |= set(self.workspaces.get(workspace_id).excluded_mrns)
        if excluded_mrns:
            exclude["patient_id"] = exclude.get("patient_id", set()) | excluded_mrns
            if "patient_id" in include:
                # exclusion wins; an emptied include-set then matches nothing
                include["patient_id"] -= excluded_mrns

        return FilterSpec(include=include, exclude=exclude, ranges=dict(req.filter.ranges))

    def _cap_per_patient(
        self, ordered: list[SearchResult], cap: int
    ) -> list[SearchResult]:
        counts: dict[str, int] = {}
        kept = []
        for hit in ordered:
            attrs = self.index.get_attributes(hit.chunk_id)
            mrn = attrs.categorical.get("patient_id") if attrs else None
            key = mrn if mrn is not None else f"\x00note:{hit.note_id}"
            n = counts.get(key, 0)
            if n < cap:
                counts[key] = n + 1
                kept.append(hit)
        return kept

    def _make_hit(
        self, record: NoteRecord, chunk_hit: SearchResult, rank: int
    ) -> SearchHit:
        ordinal = int(chunk_hit.chunk_id.split(":")[-1])
        chunks = chunk_note(record.note_id, record.text, self.config.chunking)
        chunk = chunks[min(ordinal, len(chunks) - 1)]
        score = max(-1.0, min(1.0, chunk_hit.score))
        return SearchHit(
            note=record,
            best_chunk=BestChunk(
                chunk_id=chunk_hit.chunk_id,
                char_start=chunk.char_start,
                char_end=chunk.char_end,
                text=chunk.text,
            ),
            score=score,
            rank=rank,
        )

    def _audit(
        self,
        req: SearchRequest,
        user: str,
        merged: FilterSpec,
        note_ids: list[int],
        timings: list[float],
        page: int,
        workspace_id: str | None,
        status: str,
    ) -> None:
        record = AuditRecord(
            timestamp=datetime.now(timezone.utc).isoformat(),
            user_identity=user,
            question=req.question,
            filter=merged.to_json(),
            returned_note_ids=list(note_ids),
            result_count=len(note_ids),
            embed_ms=round(timings[0], 3),
            search_ms=round(timings[1], 3),
            hydrate_ms=round(timings[2], 3),
            status=status,
            page=page,
            workspace_id=workspace_id,
        )
        self.audit_log.append(record)
