"""Per-downstream-class similarity profiles against all pretrained labels.

Cosine similarity is computed on raw embeddings (no pre-normalization) with
64-bit left-to-right accumulation, as ``dot / sqrt(na * nb)`` clamped to
[-1, 1]; results are bitwise identical to a naive per-pair loop, and
identical vectors score exactly 1.0 (IEEE sqrt(fl(x*x)) == x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .embedding_io import EmbeddingMatrix
from .errors import InvalidInputError, ShapeError


@dataclass
class SimilarityProfile:
    """All pretrained indices for one downstream class, sorted by similarity.

    Sorted descending by value; ties break by ascending pretrained index.
    """

    downstream_index: int
    indices: np.ndarray  # int64, a permutation of [0, n)
    values: np.ndarray  # float64 in [-1, 1], non-increasing

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        n = self.indices.size
        if self.values.shape != (n,) or n == 0:
            raise InvalidInputError("profile indices/values must be equal-length, non-empty")
        if not np.array_equal(np.sort(self.indices), np.arange(n)):
            raise InvalidInputError("profile indices must be a permutation of [0, n)")
        if np.any(self.values[:-1] < self.values[1:]):
            raise InvalidInputError("profile values must be non-increasing")
        if self.values[0] > 1.0 or self.values[-1] < -1.0:
            raise InvalidInputError("profile values must lie in [-1, 1]")

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(s), float(v)) for s, v in zip(self.indices, self.values)]


@njit(cache=True)
def _cosine_one(a, b):  # pragma: no cover - exercised via wrappers
    dot = 0.0
    na = 0.0
    nb = 0.0
    for i in range(a.size):
        dot += a[i] * b[i]
        na += a[i] * a[i]
        nb += b[i] * b[i]
    return dot, na, nb


@njit(cache=True)
def _cosine_matrix(down, pre, out):  # pragma: no cover
    for i in range(down.shape[0]):
        for j in range(pre.shape[0]):
            dot, na, nb = _cosine_one(down[i], pre[j])
            c = dot / np.sqrt(na * nb)
            if c > 1.0:
                c = 1.0
            elif c < -1.0:
                c = -1.0
            out[i, j] = c


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two vectors, 64-bit accumulation, clamped to [-1, 1]."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
        raise ShapeError(f"cosine_similarity dims differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InvalidInputError("cosine_similarity of empty vectors")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("cosine_similarity input contains non-finite values")
    dot, na, nb = _cosine_one(a, b)
    if na == 0.0 or nb == 0.0:
        raise InvalidInputError("cosine_similarity of a zero-norm vector")
    return float(min(1.0, max(-1.0, dot / np.sqrt(na * nb))))


def build_profiles(down: EmbeddingMatrix, pre: EmbeddingMatrix) -> list[SimilarityProfile]:
    """One sorted profile per downstream class against all pretrained labels."""
    if down.dim != pre.dim:
        raise ShapeError(f"embedding dims differ: {down.dim} vs {pre.dim}")
    d64 = down.vectors.astype(np.float64)
    p64 = pre.vectors.astype(np.float64)
    sims = np.empty((down.rows, pre.rows), dtype=np.float64)
    _cosine_matrix(d64, p64, sims)
    profiles = []
    for i in range(down.rows):
        # stable argsort on the negated values: ties keep ascending index
        order = np.argsort(-sims[i], kind="stable")
        profiles.append(SimilarityProfile(i, order, sims[i][order]))
    return profiles
