"""Numeric primitives shared across the package.

Correlations, ranking, quantiles and the two conversions between saliency
vectors and permutation explanations. Permutations are 0-based index arrays:
``perm[k]`` is the element ranked ``k``-th most important.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "pearson",
    "spearman",
    "correlation",
    "cosine_similarity",
    "argsort_desc",
    "perm_to_saliency",
    "check_permutation",
    "quantile",
    "minmax_normalize",
]


def _as_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("correlation needs at least 2 values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite value in correlation input")
    return a, b


def pearson(a, b) -> float:
    """Pearson correlation; 0.0 when either side has zero variance."""
    a, b = _as_pair(a, b)
    ac = a - a.mean()
    bc = b - b.mean()
    na = np.sqrt(ac @ ac)
    nb = np.sqrt(bc @ bc)
    # relative guard so that float noise on a constant vector reads as constant
    if na <= 1e-12 * max(1.0, np.abs(a).max()) or nb <= 1e-12 * max(1.0, np.abs(b).max()):
        return 0.0
    r = float(ac @ bc / (na * nb))
    return min(1.0, max(-1.0, r))


def spearman(a, b) -> float:
    """Spearman correlation: Pearson of fractional (mean-tie) ranks."""
    a, b = _as_pair(a, b)
    return pearson(rankdata(a), rankdata(b))


def correlation(a, b, kind: str = "pearson") -> float:
    if kind == "pearson":
        return pearson(a, b)
    if kind == "spearman":
        return spearman(a, b)
    raise ValueError(f"unknown correlation kind {kind!r}")


def cosine_similarity(a, b) -> float:
    """Cosine similarity with the zero-vector convention.

    Two zero vectors are identical (1.0); a zero vector against a nonzero
    one is dissimilar (0.0).
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, a @ b / (na * nb))))


def argsort_desc(s) -> np.ndarray:
    """Indices of ``s`` from largest to smallest; ties keep ascending index."""
    s = np.asarray(s, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("cannot rank an empty explanation")
    return np.argsort(-s, kind="stable")


def check_permutation(perm, n: int | None = None) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.ndim != 1 or perm.size == 0:
        raise ValueError("permutation must be a nonempty 1-d sequence")
    if not np.issubdtype(perm.dtype, np.integer):
        if not np.all(np.equal(np.mod(perm, 1), 0)):
            raise ValueError("permutation entries must be integers")
        perm = perm.astype(int)
    if n is not None and perm.size != n:
        raise ValueError(f"permutation has length {perm.size}, expected {n}")
    if not np.array_equal(np.sort(perm), np.arange(perm.size)):
        raise ValueError(f"not a permutation of 0..{perm.size - 1}: {perm.tolist()}")
    return perm


def perm_to_saliency(perm) -> np.ndarray:
    """Rank-based saliency: the element at rank k (0-based) gets (n - k) / n."""
    perm = check_permutation(perm)
    n = perm.size
    s = np.empty(n)
    s[perm] = (n - np.arange(n)) / n
    return s


def quantile(values, p: float) -> float:
    """Linear-interpolation quantile of ``values`` at level ``p``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("quantile of empty input")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"quantile level must lie in [0, 1], got {p}")
    return float(np.quantile(v, p, method="linear"))


def minmax_normalize(raw) -> np.ndarray:
    """Squash ``raw`` into [0, 1]; a constant vector maps to all 0.5."""
    raw = np.asarray(raw, dtype=float).ravel()
    lo, hi = float(raw.min()), float(raw.max())
    span = hi - lo
    if not math.isfinite(span) or span <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        return np.full(raw.size, 0.5)
    # rounding is monotone, so lo <= v <= hi already maps into [0, 1]
    return (raw - lo) / span
