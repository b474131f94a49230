"""Agreement and rank statistics, implemented directly over numpy.

Everything here is small-sample arithmetic on study-sized data, so each
statistic is written out in full rather than pulled from a stats package;
the test suite checks them against independent brute-force oracles
(contingency tables, coincidence matrices, exact subset enumeration).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numpy as np


class DegenerateAgreementError(ValueError):
    """Raised when chance agreement is total and the statistic is undefined."""


# --------------------------------------------------------------------------
# Wilson interval


def wilson_ci(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    n = float(trials)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = (z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# --------------------------------------------------------------------------
# Mann-Whitney U

_EXACT_LIMIT = 20


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """U for sample_a (pairs where a exceeds b, ties half) and two-sided p.

    Exact enumeration of the rank-sum distribution when both samples have
    at most 20 observations; otherwise the normal approximation with tie
    correction and a 0.5 continuity correction.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    n1, n2 = len(a), len(b)
    combined = np.concatenate([a, b])
    ranks = _midranks(combined)
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0

    if n1 <= _EXACT_LIMIT and n2 <= _EXACT_LIMIT:
        p = _exact_rank_p(ranks, n1, r1)
    else:
        p = _approx_p(combined, ranks, n1, n2, u1)
    return u1, p


def _exact_rank_p(ranks: np.ndarray, n1: int, r1: float) -> float:
    # Distribution of the size-n1 rank sum over all subsets, counted by a
    # subset-sum DP. Doubled midranks are integers, so sums stay exact.
    weights = np.rint(ranks * 2).astype(np.int64)
    total = int(weights.sum())
    n = len(weights)
    # table[c] maps achievable weight-sum -> number of subsets of size c
    table: list[dict[int, int]] = [dict() for _ in range(n1 + 1)]
    table[0][0] = 1
    for w in weights:
        w = int(w)
        for c in range(min(n1, n) - 1, -1, -1):
            if not table[c]:
                continue
            bump = table[c + 1]
            for s, cnt in table[c].items():
                bump[s + w] = bump.get(s + w, 0) + cnt
    dist = table[n1]
    m = sum(dist.values())
    target = int(round(r1 * 2))
    le = sum(cnt for s, cnt in dist.items() if s <= target)
    ge = sum(cnt for s, cnt in dist.items() if s >= target)
    return min(1.0, 2.0 * min(le, ge) / m)


def _approx_p(combined, ranks, n1, n2, u1) -> float:
    n = n1 + n2
    mean = n1 * n2 / 2.0
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float(((tie_counts**3) - tie_counts).sum())
    var = (n1 * n2 / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        return 1.0
    diff = u1 - mean
    if diff == 0.0:
        return 1.0
    z = (diff - math.copysign(0.5, diff)) / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0))


# --------------------------------------------------------------------------
# Cohen's kappa


def cohens_kappa(ratings_a, ratings_b) -> float:
    a = list(ratings_a)
    b = list(ratings_b)
    if len(a) != len(b):
        raise ValueError("rating vectors must have equal length")
    if not a:
        raise ValueError("rating vectors must be nonempty")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    freq_a = Counter(a)
    freq_b = Counter(b)
    p_e = sum(freq_a[c] * freq_b.get(c, 0) for c in freq_a) / (n * n)
    if p_e >= 1.0:
        raise DegenerateAgreementError(
            "both raters use a single category; kappa is undefined"
        )
    return (p_o - p_e) / (1.0 - p_e)


# --------------------------------------------------------------------------
# Fleiss' kappa


def fleiss_kappa(matrix) -> float:
    """matrix: one row per item, each row the category label from every rater."""
    rows = [list(r) for r in matrix]
    if len(rows) < 2:
        raise ValueError("need at least 2 items")
    r = len(rows[0])
    if r < 2:
        raise ValueError("need at least 2 raters")
    if any(len(row) != r for row in rows):
        raise ValueError("every item must have the same number of ratings")

    categories = sorted({c for row in rows for c in row}, key=str)
    cat_idx = {c: i for i, c in enumerate(categories)}
    counts = np.zeros((len(rows), len(categories)), dtype=np.float64)
    for i, row in enumerate(rows):
        for c in row:
            counts[i, cat_idx[c]] += 1

    p_i = ((counts**2).sum(axis=1) - r) / (r * (r - 1))
    p_bar = float(p_i.mean())
    p_j = counts.sum(axis=0) / (len(rows) * r)
    p_e = float((p_j**2).sum())
    if p_e >= 1.0:
        raise DegenerateAgreementError(
            "all ratings share one category; kappa is undefined"
        )
    return (p_bar - p_e) / (1.0 - p_e)


# --------------------------------------------------------------------------
# Krippendorff's alpha


def krippendorff_alpha(matrix, metric: str = "interval") -> float:
    """matrix: one row per item, one column per rater, None for missing.

    alpha = 1 - D_o / D_e over ordered value pairs; interval metric uses
    squared differences, nominal uses 0/1 disagreement.
    """
    if metric not in ("interval", "nominal"):
        raise ValueError("metric must be 'interval' or 'nominal'")

    def delta(x, y) -> float:
        if metric == "interval":
            return (float(x) - float(y)) ** 2
        return 0.0 if x == y else 1.0

    units = []
    for row in matrix:
        vals = [v for v in row if v is not None]
        if len(vals) >= 2:
            units.append(vals)
    pooled = [v for vals in units for v in vals]
    n_total = len(pooled)
    if n_total < 2:
        raise ValueError("need at least two paired values")

    d_o = 0.0
    for vals in units:
        m = len(vals)
        pair_sum = sum(delta(x, y) for x, y in combinations(vals, 2))
        d_o += 2.0 * pair_sum / (m - 1)
    d_o /= n_total

    d_e = 0.0
    for x, y in combinations(pooled, 2):
        d_e += 2.0 * delta(x, y)
    d_e /= n_total * (n_total - 1)

    if d_e == 0.0:
        raise DegenerateAgreementError(
            "no variation across values; alpha is undefined"
        )
    return 1.0 - d_o / d_e


# --------------------------------------------------------------------------
# Bootstrap comparison of within- vs cross-method agreement


@dataclass(frozen=True)
class AbstractionRecord:
    task_id: str
    abstractor_id: str
    patient_id: str
    method: str  # "ehr" | "semantic"
    time_seconds: float
    value: object  # categorical label or number, per task


@dataclass(frozen=True)
class BootstrapResult:
    delta: float
    p_value: float
    resamples: int
    redrawn: int


def _pair_agreement(pairs: list[tuple], metric: str) -> float:
    """Chance-corrected agreement over a bag of rating pairs.

    Categorical pairs get a kappa-style statistic with the chance term from
    the pooled value distribution; interval pairs get an alpha-style
    1 - D_o/D_e with squared differences.
    """
    if not pairs:
        raise DegenerateAgreementError("no rating pairs on one side")
    if metric == "categorical":
        p_o = sum(1 for x, y in pairs if x == y) / len(pairs)
        pooled = Counter()
        for x, y in pairs:
            pooled[x] += 1
            pooled[y] += 1
        total = 2 * len(pairs)
        p_e = sum((c / total) ** 2 for c in pooled.values())
        if p_e >= 1.0:
            raise DegenerateAgreementError("single category on one side")
        return (p_o - p_e) / (1.0 - p_e)
    # interval
    pooled_vals = [float(v) for pair in pairs for v in pair]
    d_o = sum((float(x) - float(y)) ** 2 for x, y in pairs) / len(pairs)
    n = len(pooled_vals)
    mean = sum(pooled_vals) / n
    var = sum((v - mean) ** 2 for v in pooled_vals) / n
    d_e = 2.0 * var * n / (n - 1)  # mean ordered-pair squared difference
    if d_e == 0.0:
        raise DegenerateAgreementError("no variation on one side")
    return 1.0 - d_o / d_e


def _split_pairs(by_patient: dict, metric: str) -> float:
    within = []
    cross = []
    for ratings in by_patient.values():
        for (m1, v1), (m2, v2) in combinations(ratings, 2):
            if m1 == m2:
                within.append((v1, v2))
            else:
                cross.append((v1, v2))
    return _pair_agreement(within, metric) - _pair_agreement(cross, metric)


def bootstrap_agreement_diff(
    records: list[AbstractionRecord],
    resamples: int = 10_000,
    seed: int = 0,
    metric: str | None = None,
) -> BootstrapResult:
    """Observed within-minus-cross agreement and its null p-value.

    Patients are resampled with replacement; within each drawn patient the
    method labels are shuffled across its raters, which imposes the
    no-method-effect null while preserving each patient's rating values.
    The p-value is the share of null resamples whose difference is at
    least the observed one. Degenerate resamples are redrawn and counted.
    """
    if not records:
        raise ValueError("records must be nonempty")
    methods = {r.method for r in records}
    raters = {r.abstractor_id for r in records}
    if len(methods) < 2 or len(raters) < 2:
        raise ValueError("need at least two methods and two raters")

    if metric is None:
        metric = (
            "interval"
            if all(isinstance(r.value, (int, float)) for r in records)
            else "categorical"
        )
    if metric not in ("categorical", "interval"):
        raise ValueError("metric must be 'categorical' or 'interval'")

    by_patient: dict[str, list[tuple[str, object]]] = {}
    for r in sorted(records, key=lambda r: (r.patient_id, r.abstractor_id)):
        by_patient.setdefault(r.patient_id, []).append((r.method, r.value))

    observed = _split_pairs(by_patient, metric)

    patients = sorted(by_patient)
    rng = np.random.default_rng(seed)
    hits = 0
    redrawn = 0
    done = 0
    attempts_left = resamples * 100
    while done < resamples:
        if attempts_left <= 0:
            raise DegenerateAgreementError(
                "could not draw enough non-degenerate resamples"
            )
        attempts_left -= 1
        draw = rng.integers(0, len(patients), size=len(patients))
        sample: dict[int, list[tuple[str, object]]] = {}
        for slot, pi in enumerate(draw):
            ratings = by_patient[patients[pi]]
            # permute method labels across this patient's raters (the null)
            perm = rng.permutation(len(ratings))
            sample[slot] = [
                (ratings[j][0], ratings[i][1]) for i, j in zip(range(len(ratings)), perm)
            ]
        try:
            delta_star = _split_pairs(sample, metric)
        except DegenerateAgreementError:
            redrawn += 1
            continue
        if delta_star >= observed:
            hits += 1
        done += 1

    return BootstrapResult(
        delta=observed,
        p_value=hits / resamples,
        resamples=resamples,
        redrawn=redrawn,
    )
