"""Deterministic numeric kernel: seeded PRNG, dense ops, softmax/cross-entropy.

Conventions used throughout the package:

* Stored tensors (files, frozen weights, saved prompts) are row-major
  32-bit floats; all arithmetic upcasts to 64-bit and accumulates
  left-to-right so results are bitwise reproducible across runs.
* ``matmul`` returns float64 regardless of input dtype.
* The PRNG is SplitMix64 seeding a xoshiro256** generator. The algorithm
  is fixed: the same seed yields the same sequence on every platform.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import InvalidInputError, ShapeError

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** generator seeded via SplitMix64.

    The state is fully determined by the 64-bit seed, so any consumer that
    draws in a fixed order is reproducible. Instances are single-owner:
    do not share one across concurrent tasks.
    """

    def __init__(self, seed: int):
        seed = int(seed) & _MASK64
        self.seed = seed
        s = seed
        state = []
        for _ in range(4):
            s, out = _splitmix64(s)
            state.append(out)
        self._s = state

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform double in [low, high); 53-bit resolution."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def uniforms(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(low, high) for _ in range(n)], dtype=np.float64)

    def normal(self) -> float:
        """Standard normal via Box-Muller; draws two uniforms, returns one."""
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise InvalidInputError("below() requires n >= 1")
        threshold = (1 << 64) % n
        while True:
            u = self.next_u64()
            if u >= threshold:
                return u % n

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


@njit(cache=True)
def _matmul_kernel(a, b, out):  # pragma: no cover - exercised via matmul
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense product with fixed left-to-right 64-bit accumulation.

    Inputs may be float32 or float64; the result is float64 and bitwise
    identical to a naive ``for i, j: sum over k`` triple loop.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    a64 = np.ascontiguousarray(a, dtype=np.float64)
    b64 = np.ascontiguousarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    _matmul_kernel(a64, b64, out)
    return out


def softmax(v: np.ndarray) -> np.ndarray:
    """Stable softmax (max-subtraction); output sums to 1 within 1e-6."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise InvalidInputError("softmax expects a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("softmax input contains non-finite values")
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy(scores: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(scores) against a class index, plus gradient.

    Returns ``(loss, grad)`` with ``loss = -log softmax(scores)[target]``
    computed as ``logsumexp(scores) - scores[target]`` and
    ``grad = softmax(scores) - one_hot(target)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size < 1:
        raise InvalidInputError("cross_entropy expects a non-empty 1-D vector")
    if not np.all(np.isfinite(scores)):
        raise InvalidInputError("cross_entropy scores contain non-finite values")
    target = int(target)
    if target < 0 or target >= scores.size:
        raise IndexError(f"target {target} out of range for {scores.size} scores")
    m = scores.max()
    e = np.exp(scores - m)
    z = e.sum()
    loss = float(m + math.log(z) - scores[target])
    grad = e / z
    grad[target] -= 1.0
    return loss, grad
