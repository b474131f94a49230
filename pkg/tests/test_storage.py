import hashlib

import numpy as np
import pytest

from notesearch.ann import (
    ChecksumError,
    FormatError,
    IndexConfig,
    PartitionedIndex,
    load_index,
    save_index,
)

from conftest import build_entries, build_index, random_unit
from test_index import exhaustive_index

DIM = 32


def roundtrip(index, tmp_path, name="index.bin"):
    path = str(tmp_path / name)
    save_index(index, path)
    return load_index(path), path


class TestRoundtrip:
    def test_replay_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        entries = build_entries(rng, 150, DIM)
        index = build_index(entries, dim=DIM, partitions=4, nprobe=3)
        loaded, _ = roundtrip(index, tmp_path)
        for i in range(50):
            q = random_unit(np.random.default_rng(1000 + i), 1, DIM)[0]
            a = index.search(q, k=12)
            b = loaded.search(q, k=12)
            assert [(h.chunk_id, h.note_id, h.score) for h in a] == [
                (h.chunk_id, h.note_id, h.score) for h in b
            ]

    def test_attributes_survive(self, tmp_path):
        rng = np.random.default_rng(1)
        entries = build_entries(rng, 30, DIM)
        index = exhaustive_index(entries)
        loaded, _ = roundtrip(index, tmp_path)
        for e in entries:
            assert loaded.get_attributes(e.chunk_id).categorical == (
                e.attributes.categorical
            )

    def test_config_and_counters_survive(self, tmp_path):
        rng = np.random.default_rng(2)
        entries = build_entries(rng, 40, DIM)
        index = build_index(entries, dim=DIM, partitions=8, nprobe=5, spill=1,
                            rescore_budget=77, quantization="scalar-8-bit")
        loaded, _ = roundtrip(index, tmp_path)
        assert loaded.config == index.config
        assert loaded.generation == index.generation
        assert len(loaded) == len(index)

    def test_empty_trained_index(self, tmp_path):
        rng = np.random.default_rng(3)
        cfg = IndexConfig(DIM, 2, 2, quantization="none")
        index = PartitionedIndex(cfg)
        index.train(random_unit(rng, 10, DIM), seed=0)
        loaded, _ = roundtrip(index, tmp_path)
        assert loaded.search(random_unit(rng, 1, DIM)[0], k=4) == []

    def test_insert_after_load(self, tmp_path):
        rng = np.random.default_rng(4)
        entries = build_entries(rng, 20, DIM)
        index = exhaustive_index(entries)
        loaded, _ = roundtrip(index, tmp_path)
        fresh = build_entries(np.random.default_rng(5), 3, DIM)
        from notesearch.ann import VectorEntry

        fresh = [
            VectorEntry(f"{900000 + i}:0", 900000 + i, e.vector, e.attributes)
            for i, e in enumerate(fresh)
        ]
        loaded.insert(fresh)
        assert len(loaded) == 23
        hit = loaded.search(fresh[0].vector, k=1)[0]
        assert hit.chunk_id == fresh[0].chunk_id


class TestDeterminism:
    def test_same_index_same_bytes(self, tmp_path):
        rng = np.random.default_rng(6)
        entries = build_entries(rng, 80, DIM)
        index = build_index(entries, dim=DIM, partitions=4)
        save_index(index, str(tmp_path / "a.bin"))
        save_index(index, str(tmp_path / "b.bin"))
        a = open(tmp_path / "a.bin", "rb").read()
        b = open(tmp_path / "b.bin", "rb").read()
        assert a == b

    def test_rebuilt_pipeline_same_bytes(self, tmp_path):
        # identical construction sequence must produce identical files
        def build():
            rng = np.random.default_rng(7)
            entries = build_entries(rng, 60, DIM)
            return build_index(entries, dim=DIM, partitions=4, seed=3)

        save_index(build(), str(tmp_path / "a.bin"))
        save_index(build(), str(tmp_path / "b.bin"))
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


class TestCorruption:
    def test_flipped_byte_fails_checksum(self, tmp_path):
        rng = np.random.default_rng(8)
        index = exhaustive_index(build_entries(rng, 25, DIM))
        _, path = roundtrip(index, tmp_path)
        blob = bytearray(open(path, "rb").read())
        blob[len(blob) // 2] ^= 0xFF
        open(path, "wb").write(bytes(blob))
        with pytest.raises(ChecksumError):
            load_index(path)

    def test_corrupted_trailing_byte(self, tmp_path):
        rng = np.random.default_rng(9)
        index = exhaustive_index(build_entries(rng, 10, DIM))
        _, path = roundtrip(index, tmp_path)
        blob = bytearray(open(path, "rb").read())
        blob[-1] ^= 0x01
        open(path, "wb").write(bytes(blob))
        with pytest.raises(ChecksumError):
            load_index(path)

    def test_truncated_file(self, tmp_path):
        rng = np.random.default_rng(10)
        index = exhaustive_index(build_entries(rng, 10, DIM))
        _, path = roundtrip(index, tmp_path)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[: len(blob) // 3])
        with pytest.raises((ChecksumError, FormatError)):
            load_index(path)

    def test_bad_magic(self, tmp_path):
        rng = np.random.default_rng(11)
        index = exhaustive_index(build_entries(rng, 10, DIM))
        _, path = roundtrip(index, tmp_path)
        blob = bytearray(open(path, "rb").read())
        blob[:4] = b"XXXX"
        # keep checksum consistent so the magic check is what fires
        body = bytes(blob[:-32])
        open(path, "wb").write(body + hashlib.sha256(body).digest())
        with pytest.raises(FormatError):
            load_index(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_index(str(tmp_path / "nope.bin"))

    def test_save_untrained_refused(self, tmp_path):
        index = PartitionedIndex(IndexConfig(DIM, 2, 1))
        with pytest.raises(Exception):
            save_index(index, str(tmp_path / "x.bin"))
