import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from notesearch.ann.quantization import asymmetric_scores, dequantize, quantize


def unit_rows(n, d, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, d)).astype(np.float32)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestRoundtrip:
    def test_constant_vector_exact(self):
        v = np.full((1, 8), 0.25, dtype=np.float32)
        codes, mins, scales = quantize(v)
        assert np.all(codes == 0)
        assert np.allclose(dequantize(codes, mins, scales), v)

    def test_error_bounded_by_half_step(self):
        v = unit_rows(64, 32, seed=1)
        codes, mins, scales = quantize(v)
        back = dequantize(codes, mins, scales)
        ranges = v.max(axis=1) - v.min(axis=1)
        # per-row half quantization step, plus float slack
        bound = ranges / (2 * 255) + 1e-6
        err = np.abs(back - v).max(axis=1)
        assert np.all(err <= bound)

    def test_one_dim_input_stays_one_dim(self):
        v = unit_rows(1, 16, seed=2)[0]
        codes, mins, scales = quantize(v)
        assert codes.shape == (16,)
        assert np.isscalar(float(mins)) and np.isscalar(float(scales))
        assert np.allclose(dequantize(codes, mins, scales), v, atol=1e-2)

    def test_codes_are_uint8(self):
        codes, _, _ = quantize(unit_rows(3, 8, seed=3))
        assert codes.dtype == np.uint8


class TestAsymmetricScores:
    def test_equals_dot_with_dequantized(self):
        docs = unit_rows(50, 24, seed=4)
        q = unit_rows(1, 24, seed=5)[0]
        codes, mins, scales = quantize(docs)
        scores = asymmetric_scores(q, codes, mins, scales)
        expected = dequantize(codes, mins, scales) @ q
        assert np.allclose(scores, expected, atol=1e-5)

    def test_close_to_true_dot(self):
        docs = unit_rows(200, 64, seed=6)
        q = unit_rows(1, 64, seed=7)[0]
        codes, mins, scales = quantize(docs)
        scores = asymmetric_scores(q, codes, mins, scales)
        true = docs @ q
        assert np.abs(scores - true).max() < 0.05

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(
            np.float32,
            (4, 12),
            elements=st.floats(-1, 1, width=32, allow_nan=False),
        )
    )
    def test_roundtrip_never_exceeds_range(self, v):
        codes, mins, scales = quantize(v)
        back = dequantize(codes, mins, scales)
        lo = v.min(axis=1, keepdims=True) - 1e-5
        hi = v.max(axis=1, keepdims=True) + 1e-5
        assert np.all(back >= lo) and np.all(back <= hi)
