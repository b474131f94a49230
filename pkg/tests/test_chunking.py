import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from notesearch.chunking import Chunk, ChunkingConfig, chunk_note, tokenize

from oracles import window_count, window_ranges


def flat_text(n_tokens: int) -> str:
    """Boundary-free text: n single-space-separated words, no newlines."""
    return " ".join(f"w{i}" for i in range(n_tokens))


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_is_its_own_token(self):
        text = "HPI: afebrile"
        spans = tokenize(text)
        assert [text[s.start_char : s.end_char] for s in spans] == [
            "HPI", ":", "afebrile",
        ]

    def test_offsets_reconstruct_input(self):
        text = "a  b\n\nc: d,e"
        spans = tokenize(text)
        # spans are ordered, non-overlapping, and indexed sequentially
        assert [s.token_index for s in spans] == list(range(len(spans)))
        for prev, cur in zip(spans, spans[1:]):
            assert prev.end_char <= cur.start_char

    def test_double_space_two_tokens(self):
        spans = tokenize("a  b")
        assert len(spans) == 2
        assert spans[0].start_char == 0 and spans[1].start_char == 3


class TestWindows:
    def test_ten_tokens_window_four_overlap_one(self):
        chunks = chunk_note(1, flat_text(10), ChunkingConfig(4, 1, 0))
        assert [(c.first_token, c.last_token) for c in chunks] == [
            (0, 3),
            (3, 6),
            (6, 9),
        ]

    def test_short_text_single_chunk(self):
        chunks = chunk_note(1, flat_text(3), ChunkingConfig(300, 50))
        assert len(chunks) == 1
        assert chunks[0].first_token == 0
        assert chunks[0].last_token == 2

    def test_boundary_retraction_on_line_break(self):
        # 8 tokens, break after token index 5 (the sixth token)
        words = [f"w{i}" for i in range(8)]
        text = " ".join(words[:6]) + "\n" + " ".join(words[6:])
        chunks = chunk_note(1, text, ChunkingConfig(6, 1, 2))
        assert chunks[0].last_token == 5

    def test_paragraph_break_preferred_over_line_break(self):
        words = [f"w{i}" for i in range(12)]
        # paragraph break after token 7, line break after token 9;
        # both inside the boundary window of the first 10-token chunk
        text = (
            " ".join(words[:8]) + "\n\n" + " ".join(words[8:10]) + "\n"
            + " ".join(words[10:])
        )
        chunks = chunk_note(1, text, ChunkingConfig(10, 2, 4))
        assert chunks[0].last_token == 7

    def test_whitespace_only_no_chunks(self):
        assert chunk_note(1, "   \n\n  ", ChunkingConfig()) == []

    def test_empty_no_chunks(self):
        assert chunk_note(1, "", ChunkingConfig()) == []


class TestClosedFormCounts:
    @pytest.mark.parametrize(
        "n,expected",
        [(0, 0), (1, 1), (299, 1), (300, 1), (301, 2), (550, 2), (551, 3), (1000, 4)],
    )
    def test_300_50(self, n, expected):
        assert window_count(n, 300, 50) == expected
        chunks = chunk_note(7, flat_text(n), ChunkingConfig(300, 50, 0))
        assert len(chunks) == expected

    def test_ranges_match_arithmetic(self):
        for n in (5, 37, 300, 301, 999, 1000):
            cfg = ChunkingConfig(300, 50, 0)
            got = [(c.first_token, c.last_token) for c in chunk_note(1, flat_text(n), cfg)]
            assert got == window_ranges(n, 300, 50)


@st.composite
def texts(draw):
    words = draw(
        st.lists(
            st.text(alphabet=string.ascii_lowercase + "0123456789", min_size=1, max_size=8),
            min_size=0,
            max_size=400,
        )
    )
    seps = draw(
        st.lists(
            st.sampled_from([" ", "  ", "\n", "\n\n", " \n "]),
            min_size=max(0, len(words) - 1),
            max_size=max(0, len(words) - 1),
        )
    )
    out = []
    for i, w in enumerate(words):
        out.append(w)
        if i < len(seps):
            out.append(seps[i])
    return "".join(out)


@st.composite
def configs(draw):
    chunk = draw(st.integers(min_value=2, max_value=60))
    overlap = draw(st.integers(min_value=0, max_value=chunk - 2))
    window = draw(st.integers(min_value=0, max_value=chunk - overlap - 1))
    return ChunkingConfig(chunk, overlap, window)


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(texts(), configs())
    def test_coverage_and_fidelity(self, text, cfg):
        spans = tokenize(text)
        chunks = chunk_note(9, text, cfg)
        if not spans:
            assert chunks == []
            return
        # total token coverage, in order, starting at 0 and ending at n-1
        assert chunks[0].first_token == 0
        assert chunks[-1].last_token == len(spans) - 1
        for prev, cur in zip(chunks, chunks[1:]):
            assert cur.first_token <= prev.last_token + 1  # no gaps
            assert cur.first_token > prev.first_token  # forward progress
        for c in chunks:
            assert text[c.char_start : c.char_end] == c.text
            assert c.first_token <= c.last_token

    @settings(max_examples=80, deadline=None)
    @given(st.integers(min_value=0, max_value=900), configs())
    def test_boundary_free_overlap_exact(self, n, cfg):
        if cfg.boundary_window_tokens != 0:
            cfg = ChunkingConfig(cfg.chunk_tokens, cfg.overlap_tokens, 0)
        chunks = chunk_note(3, flat_text(n), cfg)
        assert len(chunks) == window_count(n, cfg.chunk_tokens, cfg.overlap_tokens)
        for prev, cur in zip(chunks, chunks[1:]):
            shared = prev.last_token - cur.first_token + 1
            assert shared == cfg.overlap_tokens

    def test_determinism(self):
        text = flat_text(777) + "\n\nplan follows.\n"
        cfg = ChunkingConfig()
        a = chunk_note(5, text, cfg)
        b = chunk_note(5, text, cfg)
        assert a == b


class TestConfigValidation:
    def test_overlap_must_be_less_than_chunk(self):
        with pytest.raises(ValueError):
            ChunkingConfig(chunk_tokens=50, overlap_tokens=50)

    def test_nonpositive_chunk(self):
        with pytest.raises(ValueError):
            ChunkingConfig(chunk_tokens=0, overlap_tokens=0)


class TestChunkIds:
    def test_ordinals_are_sequential(self):
        chunks = chunk_note(42, flat_text(800), ChunkingConfig(300, 50))
        assert [c.chunk_ordinal for c in chunks] == list(range(len(chunks)))
        assert [c.chunk_id for c in chunks] == [f"42:{i}" for i in range(len(chunks))]
