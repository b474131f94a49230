import threading

import numpy as np
import pytest

from notesearch.ann import (
    AttributeSet,
    DimensionMismatchError,
    DuplicateChunkIdError,
    FilterSpec,
    IndexConfig,
    PartitionedIndex,
    UntrainedIndexError,
    VectorEntry,
)

from conftest import build_entries, build_index, random_unit
from oracles import brute_force_search

DIM = 32


def exhaustive_index(entries, partitions=4, seed=0):
    """Index configured so search must equal brute force exactly."""
    return build_index(
        entries,
        dim=DIM,
        partitions=partitions,
        nprobe=partitions,
        rescore_budget=max(len(entries) * 2, 64),
        quantization="none",
        seed=seed,
    )


def as_tuples(entries):
    return [(e.chunk_id, e.note_id, e.vector, e.attributes) for e in entries]


class TestTrainAndInsert:
    def test_untrained_search_rejected(self):
        index = PartitionedIndex(IndexConfig(DIM, 2, 1))
        with pytest.raises(UntrainedIndexError):
            index.search(np.zeros(DIM, dtype=np.float32), k=1)

    def test_untrained_insert_rejected(self):
        rng = np.random.default_rng(0)
        index = PartitionedIndex(IndexConfig(DIM, 2, 1))
        with pytest.raises(UntrainedIndexError):
            index.insert(build_entries(rng, 4, DIM))

    def test_retrain_rejected_once_populated(self):
        rng = np.random.default_rng(1)
        entries = build_entries(rng, 12, DIM)
        index = exhaustive_index(entries)
        with pytest.raises(Exception):
            index.train(random_unit(rng, 20, DIM), seed=1)

    def test_duplicate_chunk_id_rejected_and_named(self):
        rng = np.random.default_rng(2)
        entries = build_entries(rng, 6, DIM)
        index = exhaustive_index(entries)
        with pytest.raises(DuplicateChunkIdError) as err:
            index.insert([entries[3]])
        assert entries[3].chunk_id in str(err.value)

    def test_duplicate_within_batch_rejected(self):
        rng = np.random.default_rng(3)
        entries = build_entries(rng, 4, DIM)
        index = build_index(entries[:2], dim=DIM, partitions=2)
        dupe = VectorEntry(
            chunk_id=entries[2].chunk_id,
            note_id=entries[2].note_id,
            vector=entries[3].vector,
            attributes=entries[3].attributes,
        )
        with pytest.raises(DuplicateChunkIdError):
            index.insert([entries[2], dupe])

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(4)
        entries = build_entries(rng, 4, DIM)
        index = exhaustive_index(entries)
        bad = VectorEntry("999:0", 999, random_unit(rng, 1, DIM + 1)[0], AttributeSet())
        with pytest.raises(DimensionMismatchError):
            index.insert([bad])

    def test_insert_report_counts_and_generation_bumps(self):
        rng = np.random.default_rng(5)
        entries = build_entries(rng, 10, DIM)
        index = exhaustive_index(entries[:5])
        g0 = index.generation
        report = index.insert(entries[5:])
        assert report.inserted == 5
        assert report.generation > g0
        assert len(index) == 10

    def test_self_retrieval_scores_one(self):
        rng = np.random.default_rng(6)
        entries = build_entries(rng, 30, DIM)
        index = exhaustive_index(entries)
        target = entries[17]
        hits = index.search(target.vector, k=1)
        assert hits[0].chunk_id == target.chunk_id
        assert hits[0].score == pytest.approx(1.0, abs=1e-5)


class TestSearchContracts:
    def test_matches_brute_force_single_partition(self):
        rng = np.random.default_rng(7)
        entries = build_entries(rng, 5, DIM)
        index = exhaustive_index(entries, partitions=1)
        q = random_unit(rng, 1, DIM)[0]
        got = index.search(q, k=5)
        want = brute_force_search(as_tuples(entries), q, 5)
        assert [(h.chunk_id, h.note_id) for h in got] == [(c, n) for c, n, _ in want]
        assert np.allclose([h.score for h in got], [s for _, _, s in want], atol=1e-6)

    def test_filter_promotes_rank_two(self):
        rng = np.random.default_rng(8)
        entries = build_entries(rng, 40, DIM)
        index = exhaustive_index(entries)
        q = random_unit(rng, 1, DIM)[0]
        top2 = index.search(q, k=2)
        blocked_patient = None
        for e in entries:
            if e.chunk_id == top2[0].chunk_id:
                blocked_patient = e.attributes.categorical.get("patient_id")
        if blocked_patient is None:
            pytest.skip("top hit has no patient attribute in this draw")
        spec = FilterSpec(exclude={"patient_id": frozenset({blocked_patient})})
        filtered = index.search(q, k=1, filter_spec=spec)
        want = brute_force_search(as_tuples(entries), q, 1, spec)
        assert filtered[0].chunk_id == want[0][0]

    def test_k_beyond_corpus_returns_each_once(self):
        rng = np.random.default_rng(9)
        entries = build_entries(rng, 25, DIM)
        index = exhaustive_index(entries)
        q = random_unit(rng, 1, DIM)[0]
        hits = index.search(q, k=500)
        ids = [h.chunk_id for h in hits]
        assert len(ids) == 25
        assert len(set(ids)) == 25

    def test_scores_non_increasing(self):
        rng = np.random.default_rng(10)
        entries = build_entries(rng, 60, DIM)
        index = build_index(entries, dim=DIM, partitions=4, nprobe=2)
        q = random_unit(rng, 1, DIM)[0]
        hits = index.search(q, k=20)
        scores = [h.score for h in hits]
        assert scores == sorted(scores, reverse=True)

    def test_tie_breaks_ascending_chunk_id(self):
        # two entries with identical vectors must order by chunk_id
        v = random_unit(np.random.default_rng(11), 1, DIM)[0]
        entries = [
            VectorEntry("200:1", 200, v, AttributeSet()),
            VectorEntry("100:0", 100, v, AttributeSet()),
            VectorEntry("150:2", 150, v, AttributeSet()),
        ]
        index = exhaustive_index(entries, partitions=1)
        hits = index.search(v, k=3)
        assert [h.chunk_id for h in hits] == ["100:0", "150:2", "200:1"]

    def test_k_must_be_positive(self):
        rng = np.random.default_rng(12)
        index = exhaustive_index(build_entries(rng, 4, DIM))
        with pytest.raises(ValueError):
            index.search(random_unit(rng, 1, DIM)[0], k=0)

    def test_filter_soundness(self):
        rng = np.random.default_rng(13)
        entries = build_entries(rng, 120, DIM)
        index = build_index(entries, dim=DIM, partitions=6, nprobe=3)
        by_id = {e.chunk_id: e for e in entries}
        spec = FilterSpec(
            include={"note_category": frozenset({"ED Notes", "Progress Notes"})},
            ranges={"date": (17200.0, 19500.0)},
        )
        q = random_unit(rng, 1, DIM)[0]
        for hit in index.search(q, k=30, filter_spec=spec):
            assert spec.matches(by_id[hit.chunk_id].attributes)

    def test_empty_index_returns_empty(self):
        rng = np.random.default_rng(14)
        cfg = IndexConfig(DIM, 2, 2, rescore_budget=16, quantization="none")
        index = PartitionedIndex(cfg)
        index.train(random_unit(rng, 8, DIM), seed=0)
        assert index.search(random_unit(rng, 1, DIM)[0], k=5) == []


class TestOracleEquivalence:
    def test_randomized_corpora_and_filters(self):
        from conftest import random_attrs

        for trial in range(8):
            rng = np.random.default_rng(100 + trial)
            n = int(rng.integers(20, 300))
            entries = build_entries(rng, n, DIM)
            index = exhaustive_index(entries, partitions=int(rng.integers(1, 6)))
            tuples = as_tuples(entries)
            for _ in range(10):
                q = random_unit(rng, 1, DIM)[0]
                spec = None
                if rng.random() < 0.6:
                    spec = FilterSpec(
                        include=(
                            {"patient_id": frozenset({f"{int(rng.integers(1, 9)):06d}"})}
                            if rng.random() < 0.5
                            else {}
                        ),
                        exclude=(
                            {"department": frozenset({"North Clinic"})}
                            if rng.random() < 0.5
                            else {}
                        ),
                        ranges=(
                            {"date": tuple(sorted(rng.integers(17000, 20000, 2).tolist()))}
                            if rng.random() < 0.5
                            else {}
                        ),
                    )
                k = int(rng.integers(1, 15))
                got = index.search(q, k=k, filter_spec=spec)
                want = brute_force_search(tuples, q, k, spec)
                assert [(h.chunk_id, h.note_id) for h in got] == [
                    (c, n_) for c, n_, _ in want
                ], f"trial {trial}"
                assert np.allclose(
                    [h.score for h in got], [s for _, _, s in want], atol=1e-6
                )


class TestSpill:
    def test_spilled_entry_found_from_second_partition(self):
        # Two tight clusters. A vector nearly between them lands in both
        # partitions under spill=2, so probing only its second-best
        # partition must still find it.
        rng = np.random.default_rng(15)
        a = np.zeros(DIM, dtype=np.float32)
        a[0] = 1.0
        b = np.zeros(DIM, dtype=np.float32)
        b[1] = 1.0
        cluster_a = a + 0.05 * rng.standard_normal((30, DIM)).astype(np.float32)
        cluster_b = b + 0.05 * rng.standard_normal((30, DIM)).astype(np.float32)
        sample = np.concatenate([cluster_a, cluster_b])
        sample /= np.linalg.norm(sample, axis=1, keepdims=True)

        cfg = IndexConfig(DIM, 2, nprobe=1, spill=2, rescore_budget=64,
                          quantization="none")
        index = PartitionedIndex(cfg)
        index.train(sample, seed=0)

        between = (a + b) / np.linalg.norm(a + b)
        entries = [VectorEntry("1:0", 1, between.astype(np.float32), AttributeSet())]
        for i, row in enumerate(sample):
            entries.append(VectorEntry(f"{10 + i}:0", 10 + i, row, AttributeSet()))
        index.insert(entries)

        # query directly at each pure cluster axis: nprobe=1 probes only
        # that cluster's partition, yet the between-vector is retrievable
        hits_a = index.search(a, k=len(entries))
        hits_b = index.search(b, k=len(entries))
        assert any(h.chunk_id == "1:0" for h in hits_a)
        assert any(h.chunk_id == "1:0" for h in hits_b)

    def test_spill_one_restricts_to_primary(self):
        rng = np.random.default_rng(16)
        entries = build_entries(rng, 50, DIM)
        index = build_index(entries, dim=DIM, partitions=4, nprobe=4, spill=1,
                            quantization="none", rescore_budget=200)
        # spill=1 stores one copy per entry; exhaustive probe still finds all
        q = random_unit(rng, 1, DIM)[0]
        hits = index.search(q, k=100)
        assert len(hits) == 50
        assert index.stats()["rows"] == 50


class TestNprobeRecall:
    def test_recall_improves_with_probes(self):
        rng = np.random.default_rng(17)
        entries = build_entries(rng, 600, DIM)
        index = build_index(entries, dim=DIM, partitions=16, nprobe=16,
                            quantization="none", rescore_budget=1200)
        tuples = as_tuples(entries)
        queries = random_unit(rng, 30, DIM)

        def recall(nprobe):
            found = 0
            for q in queries:
                want = {c for c, _, _ in brute_force_search(tuples, q, 10)}
                got = {
                    h.chunk_id
                    for h in index.search(q, k=10, nprobe=nprobe)
                }
                found += len(want & got)
            return found / (10 * len(queries))

        r1, r16 = recall(1), recall(16)
        assert r16 == 1.0
        assert r1 <= r16


class TestAttributesAndStats:
    def test_get_attributes_roundtrip(self):
        rng = np.random.default_rng(18)
        entries = build_entries(rng, 20, DIM)
        index = exhaustive_index(entries)
        for e in entries[:5]:
            got = index.get_attributes(e.chunk_id)
            assert got.categorical == e.attributes.categorical
            for k, v in e.attributes.numeric.items():
                assert got.numeric[k] == pytest.approx(v)

    def test_contains_chunk(self):
        rng = np.random.default_rng(19)
        entries = build_entries(rng, 8, DIM)
        index = exhaustive_index(entries)
        assert index.contains_chunk(entries[0].chunk_id)
        assert not index.contains_chunk("does-not-exist:0")

    def test_vocabularies_cover_inserted_values(self):
        rng = np.random.default_rng(20)
        entries = build_entries(rng, 50, DIM)
        index = exhaustive_index(entries)
        vocab = index.vocabularies()
        seen = {e.attributes.categorical.get("note_category") for e in entries}
        seen.discard(None)
        assert seen == set(vocab["note_category"])

    def test_numeric_ranges(self):
        rng = np.random.default_rng(21)
        entries = build_entries(rng, 50, DIM)
        index = exhaustive_index(entries)
        ranges = index.numeric_ranges()
        dates = [
            e.attributes.numeric["date"]
            for e in entries
            if "date" in e.attributes.numeric
        ]
        assert ranges["date"] == (pytest.approx(min(dates)), pytest.approx(max(dates)))

    def test_stats_fields(self):
        rng = np.random.default_rng(22)
        entries = build_entries(rng, 10, DIM)
        index = exhaustive_index(entries)
        s = index.stats()
        assert s["chunks"] == 10
        assert s["partitions"] == 4
        assert s["dimension"] == DIM
        assert s["trained"] is True


class TestConcurrency:
    def test_readers_see_consistent_snapshots_during_writes(self):
        rng = np.random.default_rng(23)
        first = build_entries(rng, 100, DIM)
        index = build_index(first, dim=DIM, partitions=4, nprobe=4,
                            quantization="none", rescore_budget=4000)
        more = build_entries(np.random.default_rng(24), 900, DIM)
        # renumber so ids don't collide with the first batch
        more = [
            VectorEntry(f"{500000 + i}:0", 500000 + i, e.vector, e.attributes)
            for i, e in enumerate(more)
        ]
        queries = random_unit(rng, 8, DIM)
        stop = threading.Event()
        failures: list[str] = []

        def reader():
            while not stop.is_set():
                for q in queries:
                    hits = index.search(q, k=30)
                    ids = [h.chunk_id for h in hits]
                    if len(ids) != len(set(ids)):
                        failures.append("duplicate ids in one result")
                    scores = [h.score for h in hits]
                    if scores != sorted(scores, reverse=True):
                        failures.append("scores not sorted")

        threads = [threading.Thread(target=reader) for _ in range(4)]
        for t in threads:
            t.start()
        try:
            for lo in range(0, len(more), 50):
                index.insert(more[lo : lo + 50])
        finally:
            stop.set()
            for t in threads:
                t.join()
        assert failures == []
        assert len(index) == 1000

    def test_concurrent_inserts_serialize(self):
        rng = np.random.default_rng(25)
        base = build_entries(rng, 20, DIM)
        index = build_index(base, dim=DIM, partitions=2, nprobe=2)
        batches = []
        for b in range(6):
            batch = [
                VectorEntry(
                    f"{700000 + b * 100 + i}:0",
                    700000 + b * 100 + i,
                    random_unit(np.random.default_rng(b * 7 + i), 1, DIM)[0],
                    AttributeSet(),
                )
                for i in range(25)
            ]
            batches.append(batch)
        threads = [
            threading.Thread(target=index.insert, args=(batch,)) for batch in batches
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(index) == 20 + 6 * 25
