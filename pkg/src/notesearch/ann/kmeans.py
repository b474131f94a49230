"""Spherical k-means used to train the coarse partitioning.

Assignment maximizes dot product against unit centroids; updates renormalize
cluster means. Deterministic for a given seed.
"""

from __future__ import annotations

import numpy as np


def train_partitions(
    sample: np.ndarray,
    num_partitions: int,
    seed: int,
    max_iters: int = 25,
    tol: float = 1e-5,
) -> np.ndarray:
    """Return ``(num_partitions, dim)`` unit-norm centroids.

    Initialization is k-means++ on spherical distance (1 - dot); iterations
    run until centroids move less than ``tol`` on average or ``max_iters``
    is reached. Empty clusters steal the worst-assigned point.
    """
    sample = np.ascontiguousarray(sample, dtype=np.float32)
    if sample.ndim != 2 or sample.shape[0] == 0:
        raise ValueError("sample must be a nonempty 2-D array")
    n = sample.shape[0]
    if not 1 <= num_partitions <= n:
        raise ValueError("num_partitions must be in [1, len(sample)]")

    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(sample, num_partitions, rng)

    for _ in range(max_iters):
        sims = sample @ centroids.T  # (n, k)
        assign = np.argmax(sims, axis=1)
        new_centroids = np.zeros_like(centroids)
        np.add.at(new_centroids, assign, sample)
        norms = np.linalg.norm(new_centroids, axis=1)
        empty = np.flatnonzero(norms == 0.0)
        if empty.size:
            # Deterministically reseed empty clusters from the points that
            # fit their current assignment worst.
            best = sims[np.arange(n), assign]
            worst = np.argsort(best, kind="stable")[: empty.size]
            for c, i in zip(empty, worst):
                new_centroids[c] = sample[i]
            norms = np.linalg.norm(new_centroids, axis=1)
        new_centroids /= norms[:, None]
        movement = 1.0 - np.einsum("ij,ij->i", new_centroids, centroids)
        centroids = new_centroids
        if float(np.mean(movement)) < tol:
            break
    return centroids.astype(np.float32)


def _plusplus_init(
    sample: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = sample.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    # Squared Euclidean distance between unit vectors is 2 * (1 - dot).
    d2 = np.maximum(1.0 - sample @ sample[chosen[0]], 0.0)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # All remaining mass is on already-chosen points (duplicates);
            # take the first indices not yet selected.
            taken = set(chosen[:j].tolist())
            rest = [i for i in range(n) if i not in taken][: k - j]
            chosen[j : j + len(rest)] = rest
            break
        pick = int(rng.choice(n, p=d2 / total))
        chosen[j] = pick
        d2 = np.minimum(d2, np.maximum(1.0 - sample @ sample[pick], 0.0))
    centroids = sample[chosen].copy()
    norms = np.linalg.norm(centroids, axis=1)
    norms[norms == 0.0] = 1.0
    return centroids / norms[:, None]
