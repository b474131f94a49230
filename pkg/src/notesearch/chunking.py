"""Split note text into overlapping token windows snapped to linguistic boundaries.

Chunks are the unit of embedding and retrieval. Window ends prefer to land
just before a paragraph break (blank line) or, failing that, a line break,
so clinical sections are not fragmented mid-concept.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

# A token is a maximal run of alphanumeric characters, or a maximal run of
# punctuation (underscores count as punctuation). Whitespace only separates.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]+|_+", re.UNICODE)

# Blank line: two newlines with nothing but horizontal whitespace between.
_PARA_RE = re.compile(r"\n[ \t\r]*\n")

_NO_BREAK = 0
_LINE_BREAK = 1
_PARA_BREAK = 2


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_tokens: int = 300
    overlap_tokens: int = 50
    boundary_window_tokens: int = 30

    def __post_init__(self) -> None:
        if self.chunk_tokens <= 0:
            raise ValueError("chunk_tokens must be positive")
        if not 0 <= self.overlap_tokens < self.chunk_tokens:
            raise ValueError("overlap_tokens must satisfy 0 <= overlap < chunk_tokens")
        if not 0 <= self.boundary_window_tokens < self.chunk_tokens - self.overlap_tokens:
            raise ValueError(
                "boundary_window_tokens must be < chunk_tokens - overlap_tokens"
            )

    @property
    def stride(self) -> int:
        return self.chunk_tokens - self.overlap_tokens


@dataclass(frozen=True)
class TokenSpan:
    start_char: int
    end_char: int
    token_index: int


@dataclass(frozen=True)
class Chunk:
    note_id: int
    chunk_ordinal: int
    text: str
    first_token: int
    last_token: int  # inclusive
    char_start: int
    char_end: int  # exclusive

    @property
    def chunk_id(self) -> str:
        return f"{self.note_id}:{self.chunk_ordinal}"


def tokenize(text: str) -> list[TokenSpan]:
    """Deterministic tokenizer: offsets into the source text, whitespace skipped."""
    return [
        TokenSpan(m.start(), m.end(), i)
        for i, m in enumerate(_TOKEN_RE.finditer(text))
    ]


def _gap_breaks(text: str, spans: list[TokenSpan]) -> list[int]:
    """Classify the gap after each token (except the last) as no break,
    line break, or paragraph break."""
    breaks = []
    for j in range(len(spans) - 1):
        gap = text[spans[j].end_char : spans[j + 1].start_char]
        if _PARA_RE.search(gap):
            breaks.append(_PARA_BREAK)
        elif "\n" in gap:
            breaks.append(_LINE_BREAK)
        else:
            breaks.append(_NO_BREAK)
    return breaks


def chunk_note(note_id: int, text: str, cfg: ChunkingConfig) -> list[Chunk]:
    """Window the note's tokens into chunks.

    Windows nominally span ``chunk_tokens`` tokens and advance by
    ``chunk_tokens - overlap_tokens``. A non-final window whose end region
    (the last ``boundary_window_tokens + 1`` token gaps) contains a paragraph
    break retracts to end at the token before the closest-to-end such break;
    line breaks are used only when no paragraph break qualifies. The stride is
    recomputed from the retracted end, so consecutive chunks always share
    exactly ``overlap_tokens`` tokens.
    """
    spans = tokenize(text)
    n = len(spans)
    if n == 0:
        return []

    breaks = _gap_breaks(text, spans)
    chunks: list[Chunk] = []
    start = 0
    while True:
        end = min(start + cfg.chunk_tokens, n)  # exclusive
        if end < n:
            end = _retract(start, end, breaks, cfg.boundary_window_tokens)
        chunks.append(_make_chunk(note_id, len(chunks), text, spans, start, end))
        if end >= n:
            break
        start = end - cfg.overlap_tokens
    return chunks


def _retract(start: int, end: int, breaks: list[int], window: int) -> int:
    """Return the (exclusive) window end after boundary snapping.

    A break in the gap after token j qualifies when j lies within `window`
    tokens of the nominal last token; the window then ends at token j.
    """
    lo = max(start, end - 1 - window)
    for wanted in (_PARA_BREAK, _LINE_BREAK):
        for j in range(end - 1, lo - 1, -1):
            if breaks[j] == wanted:
                return j + 1
    return end


def _make_chunk(
    note_id: int,
    ordinal: int,
    text: str,
    spans: list[TokenSpan],
    start: int,
    end: int,
) -> Chunk:
    char_start = spans[start].start_char
    char_end = spans[end - 1].end_char
    return Chunk(
        note_id=note_id,
        chunk_ordinal=ordinal,
        text=text[char_start:char_end],
        first_token=start,
        last_token=end - 1,
        char_start=char_start,
        char_end=char_end,
    )


def count_chunks(n_tokens: int, cfg: ChunkingConfig) -> int:
    """Closed-form chunk count for boundary-free text of ``n_tokens`` tokens."""
    if n_tokens < 0:
        raise ValueError("n_tokens must be >= 0")
    if n_tokens == 0:
        return 0
    if n_tokens <= cfg.chunk_tokens:
        return 1
    return -(-(n_tokens - cfg.chunk_tokens) // cfg.stride) + 1


def write_chunk_manifest(chunks: Iterable[Chunk], fp: IO[str]) -> int:
    """Emit chunks as line-delimited manifest records; returns rows written."""
    count = 0
    for c in chunks:
        fp.write(
            json.dumps(
                {
                    "note_id": c.note_id,
                    "chunk_ordinal": c.chunk_ordinal,
                    "first_token": c.first_token,
                    "last_token": c.last_token,
                    "char_start": c.char_start,
                    "char_end": c.char_end,
                },
                separators=(",", ":"),
            )
            + "\n"
        )
        count += 1
    return count


def iter_chunk_manifest(fp: IO[str]) -> Iterator[dict]:
    for line in fp:
        line = line.strip()
        if line:
            yield json.loads(line)
