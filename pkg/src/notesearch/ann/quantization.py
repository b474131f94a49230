"""Per-vector scalar 8-bit quantization with asymmetric scoring.

Each vector stores an affine (min, scale) pair plus one byte per dimension.
Queries stay at full precision; candidate scores are computed against the
dequantized document, i.e. ``dot(q, min + codes * scale)``.
"""

from __future__ import annotations

import numpy as np

QUANT_NONE = "none"
QUANT_SCALAR8 = "scalar-8-bit"

_LEVELS = 255  # codes span [0, 255]


def quantize(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode rows of ``vectors`` to uint8 codes with per-row (min, scale).

    A constant row degenerates to scale 0 and an all-zero code, which
    round-trips exactly.
    """
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim == 1:
        codes, mins, scales = quantize(vectors[None, :])
        return codes[0], mins[0], scales[0]
    mins = vectors.min(axis=1)
    scales = (vectors.max(axis=1) - mins) / _LEVELS
    safe = np.where(scales > 0.0, scales, 1.0)
    codes = np.rint((vectors - mins[:, None]) / safe[:, None])
    codes = np.clip(codes, 0, _LEVELS).astype(np.uint8)
    codes[scales == 0.0] = 0
    return codes, mins.astype(np.float32), scales.astype(np.float32)


def dequantize(
    codes: np.ndarray, mins: np.ndarray, scales: np.ndarray
) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim == 1:
        return (mins + codes.astype(np.float32) * scales).astype(np.float32)
    return (
        np.asarray(mins, dtype=np.float32)[:, None]
        + codes.astype(np.float32) * np.asarray(scales, dtype=np.float32)[:, None]
    ).astype(np.float32)


def asymmetric_scores(
    query: np.ndarray,
    codes: np.ndarray,
    mins: np.ndarray,
    scales: np.ndarray,
    query_sum: float | None = None,
) -> np.ndarray:
    """Dot products of a raw query against dequantized codes, batched.

    Expands to ``mins * sum(q) + scales * (codes @ q)`` so no row is ever
    materialized at full precision.
    """
    q = np.asarray(query, dtype=np.float32)
    s = float(q.sum()) if query_sum is None else query_sum
    return mins * np.float32(s) + scales * (codes.astype(np.float32) @ q)
