"""Output-space mapping strategies for adapting an n-class model to m classes.

Five builders produce a :class:`MappingTable`:

* ``rm_map``    - prefix mapping: class i takes pretrained index i.
* ``fm_map``    - frequency mapping from unprompted logits on labeled examples.
* ``semap1``    - 1-on-1 semantic mapping with greedy collision fallback.
* ``semap_k``   - fixed k-on-1 semantic mapping (overlap across classes allowed).
* ``semap_a``   - adaptive k-on-1 mapping: each class keeps the maximal prefix
  of its similarity-sorted indices that stays connected under a geometrically
  decaying gap threshold (start ``epsilon``, decay ``gamma``, hard cap ``cap``).

``apply_mapping`` turns an n-vector of logits into an m-vector by summing each
class's assigned entries; ``scatter_mapping`` is its adjoint, used for
backpropagation. Mapped quantities are raw pre-softmax logits; callers apply
softmax over the m mapped scores at the loss/prediction boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numba import njit

from .errors import (
    CapacityError,
    CoverageError,
    HyperparameterError,
    InvalidInputError,
    ShapeError,
)

if TYPE_CHECKING:
    from .embedding_io import LogitBatch
    from .similarity import SimilarityProfile

STRATEGIES = ("rm", "fm", "semap1", "semap_k", "semap_a")

# Artifact-wide defaults for the adaptive strategy (used by the CLI).
DEFAULT_EPSILON = 0.05
DEFAULT_GAMMA = 0.9
DEFAULT_CAP = 50


@dataclass
class MappingTable:
    """For each downstream class, the ordered pretrained indices mapped to it."""

    m: int
    n: int
    assignments: list[list[int]]
    strategy: str
    hyperparams: dict[str, float | int] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if self.m < 1 or self.n < 1:
            raise InvalidInputError("m and n must be >= 1")
        if len(self.assignments) != self.m:
            raise InvalidInputError(
                f"expected {self.m} assignment lists, got {len(self.assignments)}"
            )
        for i, idxs in enumerate(self.assignments):
            if len(idxs) == 0:
                raise InvalidInputError(f"class {i} has no assigned indices")
            if len(set(idxs)) != len(idxs):
                raise InvalidInputError(f"class {i} has duplicate indices")
            for s in idxs:
                if not 0 <= s < self.n:
                    raise InvalidInputError(
                        f"class {i} maps to index {s}, out of range [0, {self.n})"
                    )
        if self.strategy in ("rm", "fm", "semap1"):
            if any(len(idxs) != 1 for idxs in self.assignments):
                raise InvalidInputError(f"{self.strategy} table must be 1-on-1")
            flat = [idxs[0] for idxs in self.assignments]
            if len(set(flat)) != len(flat):
                raise InvalidInputError(f"{self.strategy} table must be injective")
        cap = self.hyperparams.get("cap")
        if self.strategy == "semap_a" and cap is not None:
            if any(len(idxs) > cap for idxs in self.assignments):
                raise InvalidInputError(f"assignment longer than cap {cap}")

    def k_values(self) -> list[int]:
        """Per-class assignment lengths (the adaptive k_i for semap_a)."""
        return [len(idxs) for idxs in self.assignments]

    def _csr(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(self.m + 1, dtype=np.int64)
        for i, idxs in enumerate(self.assignments):
            indptr[i + 1] = indptr[i] + len(idxs)
        indices = np.fromiter(
            (s for idxs in self.assignments for s in idxs),
            dtype=np.int64,
            count=indptr[-1],
        )
        return indptr, indices


def rm_map(m: int, n: int) -> MappingTable:
    """Prefix mapping: class i -> [i]; remaining n-m indices are unused."""
    if m < 1:
        raise InvalidInputError("rm_map requires m >= 1 (empty downstream task)")
    if m > n:
        raise CapacityError(f"rm_map needs m <= n, got m={m} n={n}")
    return MappingTable(m, n, [[i] for i in range(m)], "rm")


def fm_map(batch: LogitBatch, m: int, n: int) -> MappingTable:
    """Frequency mapping from unprompted logits over labeled examples.

    Class i takes the pretrained index most often argmaxed by its examples.
    Collisions resolve greedily by ascending class index: a colliding class
    falls back to its next-most-frequent observed index. Frequency ties break
    by ascending pretrained index. A class whose observed candidates are all
    taken raises CapacityError; a class with zero examples raises
    CoverageError.
    """
    if m < 1:
        raise InvalidInputError("fm_map requires m >= 1")
    if batch.labels is None:
        raise InvalidInputError("fm_map requires a logit batch with labels")
    if batch.width != n:
        raise ShapeError(f"logit width {batch.width} != n={n}")
    labels = np.asarray(batch.labels)
    if labels.size and labels.max() >= m:
        bad = int(np.argmax(labels >= m))
        raise InvalidInputError(f"label {labels[bad]} at row {bad} >= m={m}")

    # argmax per row; np.argmax takes the first (smallest) index on ties
    preds = np.argmax(batch.scores, axis=1)
    preferences: list[list[int]] = []
    for i in range(m):
        rows = preds[labels == i]
        if rows.size == 0:
            raise CoverageError(f"downstream class {i} has no examples")
        counts = np.bincount(rows, minlength=n)
        observed = np.flatnonzero(counts)
        order = observed[np.lexsort((observed, -counts[observed]))]
        preferences.append([int(j) for j in order])

    taken: set[int] = set()
    assignments = []
    for i in range(m):
        choice = next((j for j in preferences[i] if j not in taken), None)
        if choice is None:
            raise CapacityError(
                f"class {i} exhausted its observed indices; "
                f"m={m} exceeds the distinct indices available"
            )
        taken.add(choice)
        assignments.append([choice])
    return MappingTable(m, n, assignments, "fm")


def semap1(profiles: Sequence[SimilarityProfile]) -> MappingTable:
    """1-on-1 semantic mapping with the greedy collision rule.

    Classes are processed in ascending index order; each takes its
    highest-similarity pretrained index not yet assigned, so the result is
    injective.
    """
    m = len(profiles)
    if m < 1:
        raise InvalidInputError("semap1 requires at least one profile")
    n = len(profiles[0].indices)
    if m > n:
        raise CapacityError(f"semap1 needs m <= n, got m={m} n={n}")
    taken: set[int] = set()
    assignments = []
    for prof in profiles:
        choice = next((int(s) for s in prof.indices if int(s) not in taken), None)
        if choice is None:
            raise CapacityError("all pretrained indices already assigned")
        taken.add(choice)
        assignments.append([choice])
    return MappingTable(m, n, assignments, "semap1")


def semap_k(profiles: Sequence[SimilarityProfile], k: int) -> MappingTable:
    """Fixed k-on-1 mapping: class i takes its top-k profile indices."""
    m = len(profiles)
    if m < 1:
        raise InvalidInputError("semap_k requires at least one profile")
    n = len(profiles[0].indices)
    k = int(k)
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    assignments = [[int(s) for s in prof.indices[:k]] for prof in profiles]
    return MappingTable(m, n, assignments, "semap_k", {"k": k})


def adaptive_prefix_len(values: np.ndarray, epsilon: float, gamma: float, cap: int) -> int:
    """Length of the maximal prefix connected to the top entry.

    ``values`` must be sorted descending. Having included entry j (1-based),
    entry j+1 joins iff the gap ``values[j-1] - values[j]`` is strictly below
    ``gamma**(j-1) * epsilon`` and j < cap; the walk stops at the first
    unreachable gap.
    """
    k = 1
    n = len(values)
    while k < n and k < cap:
        gap = float(values[k - 1]) - float(values[k])
        if gap < epsilon * gamma ** (k - 1):
            k += 1
        else:
            break
    return k


def semap_a(
    profiles: Sequence[SimilarityProfile],
    epsilon: float = DEFAULT_EPSILON,
    gamma: float = DEFAULT_GAMMA,
    cap: int = DEFAULT_CAP,
) -> MappingTable:
    """Adaptive k-on-1 mapping with decaying gap threshold.

    Overlap across downstream classes is permitted; each class's k_i is the
    connected prefix length of its own profile, capped at ``cap``.
    """
    epsilon = float(epsilon)
    gamma = float(gamma)
    cap = int(cap)
    if epsilon < 0:
        raise HyperparameterError(f"epsilon must be >= 0, got {epsilon}")
    if not 0 < gamma <= 1:
        raise HyperparameterError(f"gamma must be in (0, 1], got {gamma}")
    if cap < 1:
        raise HyperparameterError(f"cap must be >= 1, got {cap}")
    m = len(profiles)
    if m < 1:
        raise InvalidInputError("semap_a requires at least one profile")
    n = len(profiles[0].indices)
    assignments = []
    for prof in profiles:
        k = adaptive_prefix_len(prof.values, epsilon, gamma, cap)
        assignments.append([int(s) for s in prof.indices[:k]])
    return MappingTable(
        m, n, assignments, "semap_a", {"epsilon": epsilon, "gamma": gamma, "cap": cap}
    )


@njit(cache=True)
def _gather_sum_kernel(indptr, indices, scores, out):  # pragma: no cover
    for r in range(scores.shape[0]):
        for i in range(indptr.size - 1):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += scores[r, indices[p]]
            out[r, i] = acc


def apply_mapping(table: MappingTable, logits: np.ndarray) -> np.ndarray:
    """Map an n-vector of logits to m scores by summing assigned entries.

    Summation runs in list order with 64-bit accumulation and is bitwise
    identical to a naive per-class index-sum loop.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size != table.n:
        raise ShapeError(f"expected logits of length {table.n}, got shape {logits.shape}")
    return apply_mapping_batch(table, logits[None, :])[0]


def apply_mapping_batch(table: MappingTable, scores: np.ndarray) -> np.ndarray:
    """Row-wise apply_mapping over an (N, n) score matrix; returns (N, m)."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != table.n:
        raise ShapeError(f"expected (N, {table.n}) scores, got shape {scores.shape}")
    indptr, indices = table._csr()
    out = np.empty((scores.shape[0], table.m), dtype=np.float64)
    _gather_sum_kernel(indptr, indices, scores, out)
    return out


def scatter_mapping(table: MappingTable, grad_mapped: np.ndarray) -> np.ndarray:
    """Adjoint of apply_mapping: scatter-add an m-gradient onto n entries."""
    grad_mapped = np.asarray(grad_mapped, dtype=np.float64)
    if grad_mapped.ndim != 1 or grad_mapped.size != table.m:
        raise ShapeError(
            f"expected gradient of length {table.m}, got shape {grad_mapped.shape}"
        )
    out = np.zeros(table.n, dtype=np.float64)
    for i, idxs in enumerate(table.assignments):
        for s in idxs:
            out[s] += grad_mapped[i]
    return out
