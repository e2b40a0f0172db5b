import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semap.errors import InvalidInputError, ShapeError
from semap.numerics import Rng, cross_entropy, matmul, softmax

FINITE = st.floats(min_value=-50, max_value=50, allow_nan=False)


# ---------------------------------------------------------------------------
# reference implementations (independent oracles)


def naive_matmul(a, b):
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += float(a[i, k]) * float(b[k, j])
            out[i, j] = acc
    return out


def fd_gradient(f, x, step):
    """Central finite differences of scalar f at x."""
    g = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (f(hi) - f(lo)) / (2 * step)
    return g


class SplitMixXoshiroRef:
    """Independent re-derivation of the documented PRNG algorithm."""

    MASK = (1 << 64) - 1

    def __init__(self, seed):
        s = seed & self.MASK
        self.state = []
        for _ in range(4):
            s = (s + 0x9E3779B97F4A7C15) & self.MASK
            z = s
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
            self.state.append(z ^ (z >> 31))

    def _rotl(self, x, k):
        return ((x << k) | (x >> (64 - k))) & self.MASK

    def next(self):
        s = self.state
        out = (self._rotl((s[1] * 5) & self.MASK, 7) * 9) & self.MASK
        t = (s[1] << 17) & self.MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self._rotl(s[3], 45)
        return out


# ---------------------------------------------------------------------------
# softmax


def test_softmax_symmetry():
    assert np.array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])


def test_softmax_large_inputs_no_overflow():
    out = softmax(np.array([1000.0, 1000.0, 1000.0]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_softmax_closed_form():
    # softmax([ln 2, 0]) = [2, 1] / 3
    out = softmax(np.array([math.log(2.0), 0.0]))
    np.testing.assert_allclose(out, [2 / 3, 1 / 3], rtol=1e-14)


def test_softmax_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        softmax(np.array([0.0, np.nan]))
    with pytest.raises(InvalidInputError):
        softmax(np.array([np.inf, 0.0]))


@given(st.lists(FINITE, min_size=1, max_size=200))
def test_softmax_sums_to_one(values):
    out = softmax(np.array(values))
    assert np.all(out >= 0)
    assert abs(out.sum() - 1.0) < 1e-6


def test_softmax_sums_to_one_long_vector(np_rng):
    out = softmax(np_rng.uniform(-30, 30, size=10_000))
    assert abs(out.sum() - 1.0) < 1e-6


def test_softmax_pure(np_rng):
    v = np_rng.standard_normal(17)
    assert np.array_equal(softmax(v), softmax(v.copy()))


# ---------------------------------------------------------------------------
# cross entropy


def test_cross_entropy_two_class_symmetric():
    loss, grad = cross_entropy(np.array([0.0, 0.0]), 0)
    assert loss == pytest.approx(math.log(2.0), rel=1e-15)
    np.testing.assert_allclose(grad, [-0.5, 0.5], rtol=0, atol=1e-16)


def test_cross_entropy_dominant_logit_drives_loss_to_zero():
    loss, _ = cross_entropy(np.array([50.0, 0.0, 0.0]), 0)
    assert 0.0 <= loss < 1e-20


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        cross_entropy(np.array([0.0, 1.0]), 2)


def test_cross_entropy_gradient_matches_finite_differences(np_rng):
    worst = 0.0
    for _ in range(100):
        v = np_rng.uniform(-5, 5, size=np_rng.integers(2, 12))
        t = int(np_rng.integers(0, v.size))
        _, grad = cross_entropy(v, t)
        fd = fd_gradient(lambda u: cross_entropy(u, t)[0], v, 1e-4)
        worst = max(worst, np.linalg.norm(fd - grad) / np.linalg.norm(grad))
    assert worst < 1e-6


@given(st.lists(FINITE, min_size=2, max_size=30), st.data())
def test_cross_entropy_gradient_property(values, data):
    v = np.array(values)
    t = data.draw(st.integers(0, v.size - 1))
    _, grad = cross_entropy(v, t)
    fd = fd_gradient(lambda u: cross_entropy(u, t)[0], v, 1e-4)
    # when one logit dominates, the true gradient shrinks below the FD
    # roundoff floor (~eps * max|v| / step), hence the absolute term
    assert np.linalg.norm(fd - grad) <= 1e-9 + 1e-5 * np.linalg.norm(grad)


# ---------------------------------------------------------------------------
# matmul


def test_matmul_identity():
    m = np.arange(12, dtype=np.float32).reshape(3, 4)
    out = matmul(np.eye(3, dtype=np.float32), m)
    assert np.array_equal(out, m.astype(np.float64))


def test_matmul_scalar():
    assert matmul(np.array([[2.0]]), np.array([[3.0]]))[0, 0] == 6.0


def test_matmul_matches_naive_loop_bitwise(np_rng):
    a = np_rng.standard_normal((5, 4))
    b = np_rng.standard_normal((4, 3))
    assert np.array_equal(matmul(a, b), naive_matmul(a, b))


def test_matmul_float32_inputs_bitwise(np_rng):
    a = np_rng.standard_normal((6, 7)).astype(np.float32)
    b = np_rng.standard_normal((7, 2)).astype(np.float32)
    assert np.array_equal(matmul(a, b), naive_matmul(a, b))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


# ---------------------------------------------------------------------------
# rng


def test_rng_same_seed_same_sequence():
    a = Rng(1234)
    b = Rng(1234)
    assert [a.next_u64() for _ in range(64)] == [b.next_u64() for _ in range(64)]


def test_rng_different_seeds_differ():
    assert [Rng(1).next_u64() for _ in range(4)] != [Rng(2).next_u64() for _ in range(4)]


@pytest.mark.parametrize("seed", [0, 1, 2**63, 2**64 - 1])
def test_rng_matches_reference_algorithm(seed):
    rng = Rng(seed)
    ref = SplitMixXoshiroRef(seed)
    assert [rng.next_u64() for _ in range(128)] == [ref.next() for _ in range(128)]


def test_rng_uniform_range_and_determinism():
    rng = Rng(9)
    draws = rng.uniforms(1000, -2.0, 3.0)
    assert np.all(draws >= -2.0) and np.all(draws < 3.0)
    assert np.array_equal(draws, Rng(9).uniforms(1000, -2.0, 3.0))


def test_rng_below_bounds():
    rng = Rng(5)
    draws = [rng.below(7) for _ in range(500)]
    assert min(draws) >= 0 and max(draws) < 7
    assert set(draws) == set(range(7))


def test_rng_below_rejects_nonpositive():
    with pytest.raises(InvalidInputError):
        Rng(0).below(0)


def test_rng_shuffle_is_seeded_permutation():
    items = np.arange(20)
    Rng(77).shuffle(items)
    again = np.arange(20)
    Rng(77).shuffle(again)
    assert np.array_equal(items, again)
    assert sorted(items.tolist()) == list(range(20))
