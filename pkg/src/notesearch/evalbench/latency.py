"""Concurrency benchmark with simulated users.

Each simulated user issues a query, waits a think time, and repeats; the
level is the number of users running at once. Think-time pacing mirrors
how the production benchmark drove its load and keeps an N-user level
meaningful on small hardware: a closed loop with zero think time saturates
a single core at any level and measures queueing, not the system's shape.

Latencies are wall-clock per query, reported as median and p95 per stage.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

DEFAULT_LEVELS = (1, 5, 10, 20, 40, 80)
STAGES = ("embed_ms", "search_ms", "hydrate_ms")


@dataclass
class LatencyLevelReport:
    level: int
    queries: int
    errors: int
    median_total_ms: float
    p95_total_ms: float
    median_stage_ms: dict[str, float]
    p95_stage_ms: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "queries": self.queries,
            "errors": self.errors,
            "median_total_ms": self.median_total_ms,
            "p95_total_ms": self.p95_total_ms,
            "median_stage_ms": self.median_stage_ms,
            "p95_stage_ms": self.p95_stage_ms,
        }


@dataclass
class LatencyReport:
    think_ms: float
    queries_per_worker: int
    levels: list[LatencyLevelReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "think_ms": self.think_ms,
            "queries_per_worker": self.queries_per_worker,
            "levels": [lv.to_dict() for lv in self.levels],
        }

    def level(self, n: int) -> LatencyLevelReport:
        for lv in self.levels:
            if lv.level == n:
                return lv
        raise KeyError(f"no level {n} in report")


def index_search_runner(
    index, k: int = 10, *, nprobe: int | None = None, rescore_budget: int | None = None
) -> Callable:
    """Measure the vector-search stage alone, from pre-computed embeddings."""

    def run(vector) -> dict[str, float]:
        t0 = time.perf_counter()
        index.search(vector, k, None, nprobe=nprobe, rescore_budget=rescore_budget)
        return {
            "embed_ms": 0.0,
            "search_ms": (time.perf_counter() - t0) * 1000.0,
            "hydrate_ms": 0.0,
        }

    return run


def engine_search_runner(engine, allowlist, k: int = 20, user: str = "bench") -> Callable:
    """Measure the full governed pipeline; inputs are question strings."""
    from ..engine import SearchRequest

    def run(question) -> dict[str, float]:
        resp = engine.execute_search(
            SearchRequest(question=question, notes_to_retrieve=k), user, allowlist
        )
        t = resp.timings
        return {
            "embed_ms": t.embed_ms,
            "search_ms": t.search_ms,
            "hydrate_ms": t.hydrate_ms,
        }

    return run


def latency_bench(
    run_query: Callable[[object], Mapping[str, float]],
    inputs: Sequence,
    levels: Sequence[int] = DEFAULT_LEVELS,
    queries_per_worker: int = 15,
    think_ms: float = 500.0,
    warmup: int = 3,
    seed: int = 0,
) -> LatencyReport:
    if not inputs:
        raise ValueError("inputs must be nonempty")
    rng = np.random.default_rng(seed)
    for _ in range(warmup):
        run_query(inputs[int(rng.integers(len(inputs)))])

    report = LatencyReport(think_ms=think_ms, queries_per_worker=queries_per_worker)
    for level in levels:
        samples: list[list[tuple[dict, float]]] = [[] for _ in range(level)]
        errors: list[list[str]] = [[] for _ in range(level)]
        worker_seeds = rng.integers(0, 2**63 - 1, size=level)

        def worker(wi: int) -> None:
            wrng = np.random.default_rng(int(worker_seeds[wi]))
            # stagger start so users do not fire in lockstep
            time.sleep((wi / max(level, 1)) * think_ms / 1000.0)
            for _ in range(queries_per_worker):
                time.sleep(
                    float(wrng.uniform(0.8, 1.2)) * think_ms / 1000.0
                )
                query = inputs[int(wrng.integers(len(inputs)))]
                t0 = time.perf_counter()
                try:
                    stages = dict(run_query(query))
                except Exception as e:  # error-free runs are part of the contract
                    errors[wi].append(f"{type(e).__name__}: {e}")
                    continue
                total = (time.perf_counter() - t0) * 1000.0
                samples[wi].append((stages, total))

        threads = [
            threading.Thread(target=worker, args=(wi,), daemon=True)
            for wi in range(level)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        flat = [s for per_worker in samples for s in per_worker]
        totals = np.array([t for _, t in flat]) if flat else np.array([0.0])
        stage_arrays = {
            stage: np.array([st.get(stage, 0.0) for st, _ in flat])
            if flat
            else np.array([0.0])
            for stage in STAGES
        }
        report.levels.append(
            LatencyLevelReport(
                level=level,
                queries=len(flat),
                errors=sum(len(e) for e in errors),
                median_total_ms=float(np.percentile(totals, 50)),
                p95_total_ms=float(np.percentile(totals, 95)),
                median_stage_ms={
                    s: float(np.percentile(v, 50)) for s, v in stage_arrays.items()
                },
                p95_stage_ms={
                    s: float(np.percentile(v, 95)) for s, v in stage_arrays.items()
                },
            )
        )
    return report
