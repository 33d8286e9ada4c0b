"""
Two-sided Wilcoxon signed-rank test for paired samples.

Zero differences are dropped and tied magnitudes share average ranks. Up to
``EXACT_LIMIT`` differences the null distribution of W⁺ is counted exactly;
since average ranks are multiples of ½, counting runs over doubled ranks.
Larger samples use the tie-corrected normal approximation with continuity
correction.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from common.errors import InvalidArgumentError, UndefinedTestError

logger = logging.getLogger(__name__)

EXACT_LIMIT = 25
MIN_NONZERO = 5
METHODS = ("auto", "exact", "approx")


@dataclass(frozen=True)
class WilcoxonResult:
    """Test outcome; ``statistic`` is min(W⁺, W⁻)"""
    statistic: float
    p_value: float
    n: int
    method: str


def null_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign patterns giving each doubled W⁺ value 0..Σ ranks"""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    reach = 0
    for r in doubled_ranks.astype(int):
        counts[r:reach + r + 1] += counts[:reach + 1].copy()
        reach += r
    return counts


def exact_p_value(ranks: np.ndarray, w_plus: float) -> float:
    doubled = np.rint(2.0 * ranks).astype(int)
    counts = null_counts(doubled)
    observed = int(round(2.0 * w_plus))
    patterns = float(counts.sum())
    lower = counts[:observed + 1].sum() / patterns
    upper = counts[observed:].sum() / patterns
    return float(min(1.0, 2.0 * min(lower, upper)))


def approx_p_value(ranks: np.ndarray, w_plus: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, ties = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(ties ** 3 - ties) / 48.0
    z = (abs(w_plus - mean) - 0.5) / np.sqrt(variance)
    return float(min(1.0, 2.0 * stats.norm.sf(z)))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], method: str = "auto") -> WilcoxonResult:
    """
    Test whether the paired differences a − b are symmetric about zero.

    Args:
        a: First paired sample
        b: Second paired sample
        method: ``auto`` (exact up to 25 non-zero differences), ``exact`` or ``approx``

    Returns:
        WilcoxonResult with the two-sided p-value
    """
    if method not in METHODS:
        raise InvalidArgumentError(f"method must be one of {METHODS}, got '{method}'")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InvalidArgumentError(f"paired samples differ in length: {a.size} vs {b.size}")

    diff = a - b
    diff = diff[diff != 0]
    n = diff.size
    if n < MIN_NONZERO:
        raise UndefinedTestError(f"only {n} non-zero differences; the test needs at least {MIN_NONZERO}")

    ranks = stats.rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())

    use_exact = method == "exact" or (method == "auto" and n <= EXACT_LIMIT)
    if use_exact:
        p = exact_p_value(ranks, w_plus)
    else:
        p = approx_p_value(ranks, w_plus)
    result = WilcoxonResult(min(w_plus, w_minus), p, n, "exact" if use_exact else "approx")
    logger.debug(f"wilcoxon: n={n}, W+={w_plus}, p={p:.4g} ({result.method})")
    return result
