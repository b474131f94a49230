"""HTTP surface for the search engine.

One deployment serves one project: the allowlist and audit log are fixed
at startup. Every searching or note-fetching call must carry an identity
header, which flows into the audit trail. Request bodies are validated by
hand so a malformed filter comes back as a 400 naming the offending field
instead of a framework-shaped validation dump.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .ann import FilterError, FilterSpec
from .engine import (
    Allowlist,
    AuditRecord,
    CursorError,
    SearchEngine,
    SearchHit,
    SearchRequest,
    StageFailure,
    StaleCursorError,
    apply_allowlist,
)

USER_HEADER = "X-User"


@dataclass
class ServiceState:
    engine: SearchEngine | None = None
    allowlist: Allowlist = Allowlist()
    project_id: str = "default"


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _require_user(request: Request) -> str | None:
    user = request.headers.get(USER_HEADER)
    if user is None or not user.strip():
        return None
    return user.strip()


def _parse_search_request(body: dict) -> SearchRequest:
    if not isinstance(body, dict):
        raise ValueError("request body must be a JSON object")
    known = {
        "question",
        "filter",
        "notes_to_retrieve",
        "notes_per_patient",
        "include_mrns",
        "exclude_mrns",
        "cursor",
        "workspace_id",
    }
    for key in body:
        if key not in known:
            raise ValueError(f"unknown field: {key}")
    question = body.get("question")
    if not isinstance(question, str) or not question.strip():
        raise ValueError("invalid field: question")

    spec = FilterSpec()
    if "filter" in body and body["filter"] is not None:
        spec = FilterSpec.from_json(body["filter"])  # FilterError names the field

    k = body.get("notes_to_retrieve", 20)
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ValueError("invalid field: notes_to_retrieve")
    cap = body.get("notes_per_patient")
    if cap is not None and (not isinstance(cap, int) or isinstance(cap, bool) or cap < 1):
        raise ValueError("invalid field: notes_per_patient")

    def mrn_list(name: str) -> tuple[str, ...]:
        raw = body.get(name, [])
        if raw is None:
            return ()
        if not isinstance(raw, list) or not all(isinstance(m, str) for m in raw):
            raise ValueError(f"invalid field: {name}")
        return tuple(raw)

    try:
        return SearchRequest(
            question=question,
            filter=spec,
            notes_to_retrieve=k,
            notes_per_patient=cap,
            include_mrns=mrn_list("include_mrns"),
            exclude_mrns=mrn_list("exclude_mrns"),
        )
    except ValueError as e:
        raise ValueError(str(e)) from None


def _hit_payload(hit: SearchHit) -> dict:
    note = hit.note
    return {
        "rank": hit.rank,
        "score": hit.score,
        "note_id": note.note_id,
        "patient": {
            "mrn": note.patient.mrn,
            "name": note.patient.name,
            "birth_date": note.patient.birth_date,
            "sex": note.patient.sex,
        },
        "note_category": note.note_category,
        "encounter_type": note.encounter_type,
        "department": note.department,
        "specialty": note.specialty,
        "author": {"name": note.author.name, "role": note.author.role},
        "filed_time": note.filed_time,
        "text": note.text,
        "highlight": {
            "chunk_id": hit.best_chunk.chunk_id,
            "char_start": hit.best_chunk.char_start,
            "char_end": hit.best_chunk.char_end,
        },
    }


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="notesearch", docs_url=None, redoc_url=None)
    app.state.service = state

    def _audit_note_access(user: str, note_id: int, status: str) -> None:
        state.engine.audit_log.append(
            AuditRecord(
                timestamp=datetime.now(timezone.utc).isoformat(),
                user_identity=user,
                question=f"note_access:{note_id}",
                filter={},
                returned_note_ids=[note_id] if status == "ok" else [],
                result_count=1 if status == "ok" else 0,
                embed_ms=0.0,
                search_ms=0.0,
                hydrate_ms=0.0,
                status=status,
            )
        )

    @app.get("/health")
    async def health():
        if state.engine is None:
            return {"status": "degraded", "index": None}
        return {
            "status": "ok",
            "project_id": state.project_id,
            "index": state.engine.index.stats(),
        }

    @app.post("/search")
    async def search(request: Request):
        user = _require_user(request)
        if user is None:
            return _error(401, "missing identity header")
        if state.engine is None:
            return _error(503, "index unavailable")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body is not valid JSON")
        try:
            req = _parse_search_request(body)
        except (FilterError, ValueError) as e:
            return _error(400, str(e))

        workspace_id = body.get("workspace_id")
        cursor = body.get("cursor")
        try:
            if cursor is not None:
                resp = state.engine.search_more(
                    req, cursor, user, state.allowlist, workspace_id
                )
            else:
                resp = state.engine.execute_search(
                    req, user, state.allowlist, workspace_id
                )
        except StaleCursorError:
            return _error(409, "stale cursor: index contents changed")
        except CursorError as e:
            return _error(400, str(e))
        except StageFailure as e:
            return _error(502, f"search pipeline failed at {e.stage} stage")

        return {
            "hits": [_hit_payload(h) for h in resp.hits],
            "cursor": resp.cursor,
            "generation": resp.generation,
            "timings": {
                "embed_ms": resp.timings.embed_ms,
                "search_ms": resp.timings.search_ms,
                "hydrate_ms": resp.timings.hydrate_ms,
            },
        }

    @app.get("/notes/{note_id}")
    async def get_note(note_id: int, request: Request):
        user = _require_user(request)
        if user is None:
            return _error(401, "missing identity header")
        if state.engine is None:
            return _error(503, "index unavailable")
        permitted = apply_allowlist([note_id], state.allowlist)
        if not permitted:
            _audit_note_access(user, note_id, "denied:not_allowlisted")
            return _error(403, "note is not allowlisted for this project")
        records, missing = state.engine.store.get_notes([note_id])
        if missing:
            _audit_note_access(user, note_id, "missing")
            return _error(404, "note not found")
        _audit_note_access(user, note_id, "ok")
        return records[note_id].to_dict()

    @app.get("/vocab")
    async def vocab():
        if state.engine is None:
            return _error(503, "index unavailable")
        index = state.engine.index
        return {
            "categorical": {
                field: list(values)
                for field, values in index.vocabularies().items()
            },
            "numeric": {
                field: (list(rng) if rng else None)
                for field, rng in index.numeric_ranges().items()
            },
        }

    @app.get("/cohort/{workspace_id}")
    async def get_workspace(workspace_id: str, request: Request):
        user = _require_user(request)
        if user is None:
            return _error(401, "missing identity header")
        if state.engine is None or state.engine.workspaces is None:
            return _error(503, "workspaces unavailable")
        ws_store = state.engine.workspaces
        if workspace_id not in ws_store.list_ids():
            return _error(404, "unknown workspace")
        return _workspace_payload(ws_store.get(workspace_id))

    @app.post("/cohort/{workspace_id}/{action}")
    async def update_workspace(workspace_id: str, action: str, request: Request):
        user = _require_user(request)
        if user is None:
            return _error(401, "missing identity header")
        if state.engine is None or state.engine.workspaces is None:
            return _error(503, "workspaces unavailable")
        if action not in ("include", "exclude", "remove"):
            return _error(400, f"unknown action: {action}")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body is not valid JSON")
        mrn = body.get("mrn") if isinstance(body, dict) else None
        if not isinstance(mrn, str) or not mrn:
            return _error(400, "invalid field: mrn")
        ws = state.engine.workspaces.update(workspace_id, action, mrn)
        return _workspace_payload(ws)

    return app


def _workspace_payload(ws) -> dict:
    return {
        "workspace_id": ws.workspace_id,
        "included_mrns": list(ws.included_mrns),
        "excluded_mrns": list(ws.excluded_mrns),
        "total": len(ws.included_mrns) + len(ws.excluded_mrns),
    }
