import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from notesearch.ann import AttributeSet, IndexConfig, PartitionedIndex, VectorEntry
from notesearch.chunking import ChunkingConfig
from notesearch.embedding import EmbedderConfig, HashedBagEmbedder
from notesearch.engine import AuditLog, EngineConfig, SearchEngine, WorkspaceStore
from notesearch.ingest import IngestPipeline, SyntheticCorpusSpec, generate_synthetic_corpus, read_facts
from notesearch.notestore import NoteStore

DIM = 128

CATEGORIES = ("Progress Notes", "ED Notes", "Consult Note")
DEPARTMENTS = ("Main Campus", "North Clinic")


def random_unit(rng, n, dim=DIM):
    v = rng.standard_normal((n, dim)).astype(np.float32)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v


def random_attrs(rng) -> AttributeSet:
    cat = {}
    if rng.random() < 0.9:
        cat["patient_id"] = f"{int(rng.integers(1, 9)):06d}"
    if rng.random() < 0.8:
        cat["note_category"] = str(rng.choice(CATEGORIES))
    if rng.random() < 0.5:
        cat["department"] = str(rng.choice(DEPARTMENTS))
    num = {}
    if rng.random() < 0.8:
        num["date"] = float(rng.integers(17000, 20000))
    if rng.random() < 0.5:
        num["age_days"] = float(rng.integers(0, 8000))
    return AttributeSet(categorical=cat, numeric=num)


def build_entries(rng, n, dim=DIM):
    vectors = random_unit(rng, n, dim)
    entries = []
    for i in range(n):
        entries.append(
            VectorEntry(
                chunk_id=f"{100000 + i // 3}:{i % 3}",
                note_id=100000 + i // 3,
                vector=vectors[i],
                attributes=random_attrs(rng),
            )
        )
    return entries


def build_index(entries, dim=DIM, partitions=8, nprobe=None, spill=2,
                rescore_budget=None, quantization="scalar-8-bit", seed=0):
    cfg = IndexConfig(
        dimension=dim,
        num_partitions=partitions,
        nprobe=nprobe if nprobe is not None else partitions,
        spill=spill,
        rescore_budget=rescore_budget if rescore_budget is not None else max(200, len(entries)),
        quantization=quantization,
    )
    index = PartitionedIndex(cfg)
    sample = np.stack([e.vector for e in entries])
    index.train(sample, seed=seed)
    index.insert(entries)
    return index


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A small synthetic corpus on disk: notes.jsonl + facts.jsonl."""
    root = tmp_path_factory.mktemp("corpus")
    spec = SyntheticCorpusSpec(seed=11, num_patients=12)
    notes_path, facts_path = generate_synthetic_corpus(spec, str(root))
    return {"root": str(root), "notes": notes_path, "facts": facts_path}


@pytest.fixture()
def small_engine(tiny_corpus, tmp_path):
    """A fully ingested engine over the tiny corpus, fresh per test."""
    embedder = HashedBagEmbedder(EmbedderConfig(dimension=DIM))
    cfg = IndexConfig(dimension=DIM, num_partitions=4, nprobe=4, spill=2,
                      rescore_budget=4096, quantization="scalar-8-bit")
    index = PartitionedIndex(cfg)
    store = NoteStore.open(str(tmp_path / "notes.kv"))
    pipeline = IngestPipeline(
        notes_path=tiny_corpus["notes"],
        state_dir=str(tmp_path / "state"),
        embedder=embedder,
        index=index,
        store=store,
    )
    if not index.is_trained:
        texts = pipeline.sample_chunk_texts(limit=512)
        index.train(embedder.embed_documents(texts), seed=0)
    pipeline.run_all()
    engine = SearchEngine(
        embedder=embedder,
        index=index,
        store=store,
        audit_log=AuditLog(str(tmp_path / "audit.jsonl")),
        workspaces=WorkspaceStore(str(tmp_path / "workspaces.json")),
        config=EngineConfig(chunking=ChunkingConfig()),
    )
    yield engine
    store.close()


@pytest.fixture()
def corpus_facts(tiny_corpus):
    return read_facts(tiny_corpus["facts"])
