"""Command-line entry points.

A data directory holds everything one deployment needs:

    corpus/notes.jsonl   line-delimited note records
    corpus/facts.jsonl   planted ground truth for MCQA
    state/               per-partition manifests and embedding caches
    index.bin            the vector index
    notes.kv             note text and metadata log
    audit.jsonl          append-only audit trail
    workspaces.json      cohort workspace state
"""

from __future__ import annotations

import json
import os
import random
import socket
import sys

import click
import numpy as np

from .ann import IndexConfig, PartitionedIndex, load_index, save_index
from .chunking import ChunkingConfig, chunk_note
from .embedding import EmbedderConfig, HashedBagEmbedder, RemoteHttpEmbedder
from .engine import Allowlist, AuditLog, EngineConfig, SearchEngine, WorkspaceStore
from .evalbench import (
    AbstractionRecord,
    ContainmentOracleAnswerer,
    DegenerateAgreementError,
    bootstrap_agreement_diff,
    cohens_kappa,
    fleiss_kappa,
    generate_mcqa_items,
    index_search_runner,
    krippendorff_alpha,
    latency_bench,
    mann_whitney_u,
    run_mcqa,
    sweep_mcqa,
)
from .ingest import (
    IngestPipeline,
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
    read_facts,
)
from .notestore import NoteStore
from .service import ServiceState, create_app


def _paths(data_dir: str) -> dict[str, str]:
    return {
        "corpus": os.path.join(data_dir, "corpus"),
        "notes": os.path.join(data_dir, "corpus", "notes.jsonl"),
        "facts": os.path.join(data_dir, "corpus", "facts.jsonl"),
        "state": os.path.join(data_dir, "state"),
        "index": os.path.join(data_dir, "index.bin"),
        "kv": os.path.join(data_dir, "notes.kv"),
        "audit": os.path.join(data_dir, "audit.jsonl"),
        "workspaces": os.path.join(data_dir, "workspaces.json"),
    }


def _embedder(dimension: int, remote: str | None):
    cfg = EmbedderConfig(dimension=dimension)
    if remote:
        return RemoteHttpEmbedder(remote, cfg)
    return HashedBagEmbedder(cfg)


def _write_report(report: dict, path: str | None) -> None:
    payload = json.dumps({"v": 1, **report}, ensure_ascii=False, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    click.echo(payload)


@click.group()
def main() -> None:
    """Semantic search over clinical notes: corpus, index, serve, evaluate."""


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--patients", default=40, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report", type=click.Path(), default=None)
def ingest(data_dir: str, patients: int, seed: int, report: str | None) -> None:
    """Generate the synthetic corpus and ground-truth facts."""
    paths = _paths(data_dir)
    spec = SyntheticCorpusSpec(seed=seed, num_patients=patients)
    notes_path, facts_path = generate_synthetic_corpus(spec, paths["corpus"])
    notes = sum(1 for _ in open(notes_path, encoding="utf-8"))
    facts = sum(1 for _ in open(facts_path, encoding="utf-8"))
    _write_report(
        {"notes": notes, "facts": facts, "notes_path": notes_path}, report
    )


@main.command("train-index")
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--partitions", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dimension", default=1024, show_default=True)
@click.option("--nprobe", default=8, show_default=True)
@click.option("--spill", default=2, show_default=True)
@click.option("--rescore-budget", default=200, show_default=True)
@click.option(
    "--quantization",
    default="scalar-8-bit",
    type=click.Choice(["none", "scalar-8-bit"]),
    show_default=True,
)
@click.option("--sample-size", default=4096, show_default=True)
@click.option("--remote-embedder", default=None)
def train_index(
    data_dir, partitions, seed, dimension, nprobe, spill,
    rescore_budget, quantization, sample_size, remote_embedder,
) -> None:
    """Train partition centroids from a corpus sample and write an empty index."""
    paths = _paths(data_dir)
    embedder = _embedder(dimension, remote_embedder)
    chunk_cfg = ChunkingConfig()
    texts: list[str] = []
    with open(paths["notes"], encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            for chunk in chunk_note(record["note_id"], record["text"], chunk_cfg):
                texts.append(chunk.text)
    if not texts:
        raise click.ClickException("corpus has no chunks; run ingest first")
    rng = random.Random(seed)
    rng.shuffle(texts)
    sample_texts = texts[: max(sample_size, partitions)]
    sample = embedder.embed_documents(sample_texts)
    if len(sample) < partitions:
        raise click.ClickException(
            f"sample of {len(sample)} chunks cannot train {partitions} partitions"
        )
    cfg = IndexConfig(
        dimension=dimension,
        num_partitions=partitions,
        nprobe=nprobe,
        spill=spill,
        rescore_budget=rescore_budget,
        quantization=quantization,
    )
    index = PartitionedIndex(cfg)
    index.train(sample, seed=seed)
    save_index(index, paths["index"])
    click.echo(f"trained {partitions} partitions over {len(sample)} sampled chunks")


@main.command("build-index")
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--dimension", default=1024, show_default=True)
@click.option("--remote-embedder", default=None)
@click.option("--report", type=click.Path(), default=None)
def build_index(data_dir, dimension, remote_embedder, report) -> None:
    """Chunk, embed, and insert every partition; fill the note store."""
    paths = _paths(data_dir)
    index = load_index(paths["index"])
    if index.dimension != dimension:
        raise click.ClickException(
            f"index dimension {index.dimension} != --dimension {dimension}"
        )
    store = NoteStore.open(paths["kv"])
    pipeline = IngestPipeline(
        notes_path=paths["notes"],
        state_dir=paths["state"],
        embedder=_embedder(dimension, remote_embedder),
        index=index,
        store=store,
    )
    try:
        manifests = pipeline.run_all()
    finally:
        store.close()
    save_index(index, paths["index"])
    _write_report(
        {"partitions": [m.to_dict() for m in manifests], "chunks": len(index)},
        report,
    )


def _load_engine(paths: dict[str, str], dimension: int, remote: str | None) -> SearchEngine:
    index = load_index(paths["index"])
    store = NoteStore.open(paths["kv"])
    return SearchEngine(
        embedder=_embedder(dimension, remote),
        index=index,
        store=store,
        audit_log=AuditLog(paths["audit"]),
        workspaces=WorkspaceStore(paths["workspaces"]),
        config=EngineConfig(),
    )


def _load_allowlist(path: str | None) -> Allowlist:
    if not path:
        return Allowlist()
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return Allowlist(
        mode=raw.get("mode", "disabled"),
        approved_note_ids=frozenset(raw.get("approved_note_ids", [])),
    )


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, help="0 picks a free port")
@click.option("--dimension", default=1024, show_default=True)
@click.option("--allowlist", "allowlist_path", type=click.Path(), default=None)
@click.option("--project", default="default", show_default=True)
@click.option("--remote-embedder", default=None)
def serve(data_dir, host, port, dimension, allowlist_path, project, remote_embedder):
    """Run the HTTP service."""
    import uvicorn

    paths = _paths(data_dir)
    engine = _load_engine(paths, dimension, remote_embedder)
    state = ServiceState(
        engine=engine,
        allowlist=_load_allowlist(allowlist_path),
        project_id=project,
    )
    app = create_app(state)

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    bound = sock.getsockname()[1]
    click.echo(f"listening on {host}:{bound}", err=False)
    sys.stdout.flush()
    config = uvicorn.Config(app, log_level="warning")
    uvicorn.Server(config).run(sockets=[sock])


@main.command("bench-latency")
@click.option("--data-dir", type=click.Path(), default=None)
@click.option("--synthetic-vectors", default=0, show_default=True,
              help="bench an in-memory index of N random unit vectors instead")
@click.option("--dimension", default=1024, show_default=True)
@click.option("--partitions", default=256, show_default=True)
@click.option("--levels", default="1,5,10,20", show_default=True)
@click.option("--k", default=10, show_default=True)
@click.option("--nprobe", default=None, type=int)
@click.option("--queries-per-worker", default=15, show_default=True)
@click.option("--think-ms", default=500.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report", type=click.Path(), default=None)
def bench_latency(
    data_dir, synthetic_vectors, dimension, partitions, levels, k,
    nprobe, queries_per_worker, think_ms, seed, report,
) -> None:
    """Measure search latency across simulated-user concurrency levels."""
    levels_list = [int(x) for x in levels.split(",") if x.strip()]
    if synthetic_vectors:
        index = _synthetic_index(synthetic_vectors, dimension, partitions, seed)
    elif data_dir:
        index = load_index(_paths(data_dir)["index"])
    else:
        raise click.ClickException("pass --data-dir or --synthetic-vectors")
    rng = np.random.default_rng(seed + 1)
    queries = rng.standard_normal((256, index.dimension)).astype(np.float32)
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)
    result = latency_bench(
        index_search_runner(index, k=k, nprobe=nprobe),
        list(queries),
        levels=levels_list,
        queries_per_worker=queries_per_worker,
        think_ms=think_ms,
        seed=seed,
    )
    _write_report(result.to_dict(), report)


def _synthetic_index(
    n: int, dimension: int, partitions: int, seed: int
) -> PartitionedIndex:
    from .ann import AttributeSet, VectorEntry

    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((partitions, dimension)).astype(np.float32)
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    assign = rng.integers(0, partitions, size=n)
    vectors = centers[assign] + 0.35 * rng.standard_normal((n, dimension)).astype(
        np.float32
    )
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    cfg = IndexConfig(
        dimension=dimension,
        num_partitions=partitions,
        nprobe=max(1, partitions // 16),
        spill=2,
        rescore_budget=400,
    )
    index = PartitionedIndex(cfg)
    sample_rows = rng.choice(n, size=min(n, 20 * partitions), replace=False)
    index.train(vectors[sample_rows], seed=seed)
    entries = [
        VectorEntry(
            chunk_id=f"{i}:0",
            note_id=i,
            vector=vectors[i],
            attributes=AttributeSet(categorical={}, numeric={}),
        )
        for i in range(n)
    ]
    index.insert(entries)
    return index


@main.command("eval-mcqa")
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--dimension", default=1024, show_default=True)
@click.option("--k", default=20, show_default=True)
@click.option("--runs", default=5, show_default=True)
@click.option("--items", "num_items", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sweep", default=None, help="comma-separated k values")
@click.option("--remote-embedder", default=None)
@click.option("--report", type=click.Path(), default=None)
def eval_mcqa(
    data_dir, dimension, k, runs, num_items, seed, sweep, remote_embedder, report
) -> None:
    """Run the multiple-choice QA harness with the containment oracle."""
    paths = _paths(data_dir)
    engine = _load_engine(paths, dimension, remote_embedder)
    facts = read_facts(paths["facts"])
    items = generate_mcqa_items(facts, min(num_items, len(facts)), seed=seed)
    answerer = ContainmentOracleAnswerer()
    if sweep:
        ks = [int(x) for x in sweep.split(",") if x.strip()]
        runs_out = sweep_mcqa(engine, items, answerer, ks=ks, runs=runs, seed=seed)
        _write_report({"sweep": [r.to_dict() for r in runs_out]}, report)
    else:
        result = run_mcqa(engine, items, answerer, k, runs, seed=seed)
        _write_report(result.to_dict(), report)


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--resamples", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report", type=click.Path(), default=None)
def stats(records_path, resamples, seed, report) -> None:
    """Study statistics from an abstraction-records file (JSONL)."""
    records: list[AbstractionRecord] = []
    with open(records_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(AbstractionRecord(**json.loads(line)))
    by_task: dict[str, list[AbstractionRecord]] = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r)

    out: dict[str, dict] = {}
    for task_id in sorted(by_task):
        task = by_task[task_id]
        methods = sorted({r.method for r in task})
        entry: dict = {"n_records": len(task), "methods": methods}
        if len(methods) == 2:
            a = [r.time_seconds for r in task if r.method == methods[0]]
            b = [r.time_seconds for r in task if r.method == methods[1]]
            u, p = mann_whitney_u(a, b)
            entry["time_mann_whitney"] = {"u": u, "p": p}

        numeric = all(isinstance(r.value, (int, float)) for r in task)
        by_item: dict[tuple, dict[str, object]] = {}
        for r in task:
            by_item.setdefault((r.patient_id,), {})[r.abstractor_id] = r.value
        raters = sorted({r.abstractor_id for r in task})
        matrix = [
            [ratings.get(rater) for rater in raters] for ratings in by_item.values()
        ]
        try:
            if numeric:
                entry["krippendorff_alpha"] = krippendorff_alpha(matrix)
            else:
                complete = [row for row in matrix if all(v is not None for v in row)]
                if len(complete) >= 2 and len(raters) >= 2:
                    entry["fleiss_kappa"] = fleiss_kappa(complete)
                if len(raters) == 2 and len(complete) >= 1:
                    entry["cohens_kappa"] = cohens_kappa(
                        [row[0] for row in complete], [row[1] for row in complete]
                    )
        except DegenerateAgreementError as e:
            entry["agreement_degenerate"] = str(e)

        try:
            boot = bootstrap_agreement_diff(task, resamples=resamples, seed=seed)
            entry["bootstrap"] = {
                "delta": boot.delta,
                "p": boot.p_value,
                "resamples": boot.resamples,
                "redrawn": boot.redrawn,
            }
        except (ValueError, DegenerateAgreementError) as e:
            entry["bootstrap_skipped"] = str(e)
        out[task_id] = entry

    _write_report({"tasks": out}, report)


if __name__ == "__main__":
    main()
