"""Semantic search over clinical notes.

The pieces compose bottom-up: notes are split into overlapping chunks,
chunks are embedded, embeddings live in a partitioned vector index with
attribute filtering, and a governed query engine ties index, note store,
cohort workspaces, and audit logging together behind an HTTP service.
"""

from .ann import (
    FilterSpec,
    AttributeSet,
    IndexConfig,
    PartitionedIndex,
    SearchResult,
    VectorEntry,
    load_index,
    save_index,
)
from .chunking import Chunk, ChunkingConfig, chunk_note
from .embedding import EmbedderConfig, HashedBagEmbedder, RemoteHttpEmbedder
from .engine import (
    Allowlist,
    AuditLog,
    AuditRecord,
    EngineConfig,
    SearchEngine,
    SearchHit,
    SearchRequest,
    SearchResponse,
    StaleCursorError,
    WorkspaceStore,
)
from .notestore import (
    Author,
    NoteRecord,
    NoteStore,
    Patient,
    decode_row_key,
    make_row_key,
)

__version__ = "0.1.0"

__all__ = [
    "FilterSpec",
    "AttributeSet",
    "IndexConfig",
    "PartitionedIndex",
    "SearchResult",
    "VectorEntry",
    "load_index",
    "save_index",
    "Chunk",
    "ChunkingConfig",
    "chunk_note",
    "EmbedderConfig",
    "HashedBagEmbedder",
    "RemoteHttpEmbedder",
    "Allowlist",
    "AuditLog",
    "AuditRecord",
    "EngineConfig",
    "SearchEngine",
    "SearchHit",
    "SearchRequest",
    "SearchResponse",
    "StaleCursorError",
    "WorkspaceStore",
    "Author",
    "NoteRecord",
    "NoteStore",
    "Patient",
    "decode_row_key",
    "make_row_key",
    "__version__",
]
