"""Removal and insertion of instance elements, and index-set samplers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RemovalStrategy",
    "remove",
    "remove_many",
    "insert",
    "complement",
    "sample_subsets",
    "sample_masks",
    "subsets_to_masks",
    "all_subset_masks",
]

KINDS = ("baseline_replace", "mean_replace", "gaussian_noise")


@dataclass(frozen=True)
class RemovalStrategy:
    """How removed elements are filled.

    ``baseline_replace`` copies the baseline element, ``mean_replace`` uses the
    mean over all elements of the instance being perturbed, ``gaussian_noise``
    uses the baseline element plus N(0, sigma^2) noise drawn from a generator
    seeded by ``(seed, call_index)``.
    """

    baseline: np.ndarray
    kind: str = "baseline_replace"
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown removal kind {self.kind!r}")
        if self.kind == "gaussian_noise" and not self.sigma > 0:
            raise ValueError("gaussian_noise needs sigma > 0")
        b = np.array(self.baseline, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        b.setflags(write=False)
        object.__setattr__(self, "baseline", b)

    @classmethod
    def zeros(cls, n: int, d: int = 1) -> "RemovalStrategy":
        return cls(np.zeros((n, d)))

    def fill(self, X: np.ndarray, call_index: np.ndarray | int = 0) -> np.ndarray:
        """Replacement values for every element of the stack ``X`` (B, n, d)."""
        if X.shape[1:] != self.baseline.shape:
            raise ValueError(f"baseline shape {self.baseline.shape} does not match instance {X.shape[1:]}")
        if self.kind == "baseline_replace":
            return np.broadcast_to(self.baseline, X.shape)
        if self.kind == "mean_replace":
            return np.broadcast_to(X.mean(axis=1, keepdims=True), X.shape)
        idx = np.broadcast_to(np.asarray(call_index), (len(X),))
        noise = np.stack([
            np.random.default_rng([self.seed, int(i)]).normal(0.0, self.sigma, size=self.baseline.shape)
            for i in idx
        ])
        return self.baseline + noise


def _index_mask(I, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    idx = np.asarray(list(I) if not isinstance(I, np.ndarray) else I, dtype=int).ravel()
    if idx.size:
        if idx.min() < 0 or idx.max() >= n:
            raise IndexError(f"index set {idx.tolist()} out of range for n={n}")
        mask[idx] = True
    return mask


def remove_many(x: np.ndarray, masks: np.ndarray, strat: RemovalStrategy, call_offset: int = 0) -> np.ndarray:
    """Apply every boolean removal mask in ``masks`` (M, n) to ``x`` at once."""
    x = np.asarray(x, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 1:
        masks = masks[None]
    if masks.shape[1] != x.shape[0]:
        raise IndexError(f"mask width {masks.shape[1]} does not match n={x.shape[0]}")
    X = np.broadcast_to(x, (len(masks), *x.shape))
    fill = strat.fill(X, call_offset + np.arange(len(masks)))
    return np.where(masks[:, :, None], fill, X)


def remove(x, I, strat: RemovalStrategy, call_index: int = 0) -> np.ndarray:
    """Copy of ``x`` with the elements indexed by ``I`` replaced per ``strat``."""
    x = np.asarray(x, dtype=float)
    return remove_many(x, _index_mask(I, x.shape[0])[None], strat, call_index)[0]


def insert(baseline, x, I) -> np.ndarray:
    """Copy of ``baseline`` with the elements indexed by ``I`` taken from ``x``."""
    baseline = np.asarray(baseline, dtype=float)
    x = np.asarray(x, dtype=float)
    if baseline.shape != x.shape:
        raise ValueError(f"baseline shape {baseline.shape} does not match instance {x.shape}")
    mask = _index_mask(I, x.shape[0])
    return np.where(mask[:, None], x, baseline)


def complement(I, n: int) -> np.ndarray:
    return np.flatnonzero(~_index_mask(I, n))


def all_subset_masks(n: int) -> np.ndarray:
    """Every subset of range(n) as a (2^n, n) boolean mask; row k encodes the bits of k."""
    if n > 16:
        raise ValueError(f"refusing to enumerate 2^{n} subsets (limit n <= 16)")
    k = np.arange(2 ** n)[:, None]
    return ((k >> np.arange(n)) & 1).astype(bool)


def subsets_to_masks(subsets, n: int) -> np.ndarray:
    return np.stack([_index_mask(I, n) for I in subsets]) if len(subsets) else np.zeros((0, n), bool)


def _masks_to_sets(masks: np.ndarray) -> list[tuple[int, ...]]:
    return [tuple(np.flatnonzero(m).tolist()) for m in masks]


def sample_subsets(
    n: int,
    count: int = 1,
    seed: int = 0,
    mode: str = "uniform_powerset",
    perm=None,
    unique: bool = False,
    nonempty: bool = False,
) -> list[tuple[int, ...]]:
    """Index sets over range(n).

    Modes: ``uniform_powerset`` (each index kept with probability 1/2;
    ``unique`` draws distinct sets, ``nonempty`` rejects the empty set),
    ``all_subsets`` (n <= 16, ``count`` ignored), ``singletons`` and
    ``prefix_of`` (the n cumulative prefixes of ``perm``).
    """
    return _masks_to_sets(sample_masks(n, count, seed, mode, perm, unique, nonempty))


def sample_masks(
    n: int,
    count: int = 1,
    seed: int = 0,
    mode: str = "uniform_powerset",
    perm=None,
    unique: bool = False,
    nonempty: bool = False,
) -> np.ndarray:
    """Boolean-mask form of :func:`sample_subsets`, one row per index set."""
    if mode == "all_subsets":
        return all_subset_masks(n)
    if mode == "singletons":
        return np.eye(n, dtype=bool)
    if mode == "prefix_of":
        if perm is None:
            raise ValueError("prefix_of needs a permutation")
        perm = np.asarray(perm, dtype=int)
        masks = np.zeros((len(perm), n), dtype=bool)
        for k in range(len(perm)):
            masks[k:, perm[k]] = True
        return masks
    if mode != "uniform_powerset":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if n > 30:
        raise ValueError("uniform_powerset sampling supports n <= 30")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    total = 2 ** n - (1 if nonempty else 0)
    if unique:
        if count > total:
            raise ValueError(f"cannot draw {count} distinct subsets out of {total}")
        if n <= 20:
            codes = rng.choice(total, size=count, replace=False) + (1 if nonempty else 0)
        else:
            seen: dict[int, None] = {}
            lo = 1 if nonempty else 0
            while len(seen) < count:
                seen.setdefault(int(rng.integers(lo, 2 ** n)), None)
            codes = np.fromiter(seen, dtype=np.int64)
        return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    masks = rng.random((count, n)) < 0.5
    if nonempty:
        # redraw empty rows; terminates quickly since P(empty) = 2^-n
        empty = ~masks.any(axis=1)
        while empty.any():
            masks[empty] = rng.random((int(empty.sum()), n)) < 0.5
            empty = ~masks.any(axis=1)
    return masks
