import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from histocolor.metrics import bhattacharyya, hellinger, hellinger_backward, kl_divergence


def random_hist(rng, shape=(4, 4, 3), sparsity=0.0):
    a = rng.uniform(0, 1, shape)
    a[rng.uniform(size=shape) < sparsity] = 0
    a.flat[0] += 1e-3
    return a / a.sum()


def one_hot(i, shape=(4, 4, 3)):
    a = np.zeros(shape)
    a.flat[i] = 1.0
    return a


def test_identity_cases():
    a = random_hist(np.random.default_rng(0))
    assert hellinger(a, a) == 0.0
    assert bhattacharyya(a, a) == pytest.approx(1.0, abs=1e-12)
    assert kl_divergence(a, a) == 0.0


def test_disjoint_one_hot():
    assert hellinger(one_hot(0), one_hot(5)) == pytest.approx(1.0, abs=1e-15)
    assert bhattacharyya(one_hot(0), one_hot(5)) == 0.0
    s = 1e-6
    assert kl_divergence(one_hot(0), one_hot(5), s) == pytest.approx(np.log((1 + s) / s), rel=1e-12)


def test_direct_formula_oracles():
    rng = np.random.default_rng(42)
    a, b = random_hist(rng), random_hist(rng)
    assert abs(hellinger(a, b) - oracles.hellinger(a, b)) < 1e-12
    assert abs(bhattacharyya(a, b) - oracles.bhattacharyya(a, b)) < 1e-12
    assert abs(kl_divergence(a, b) - oracles.kl(a, b)) < 1e-12
    assert abs(hellinger(a, b) ** 2 + bhattacharyya(a, b) - 1) < 1e-12


def test_errors():
    with pytest.raises(ValueError):
        hellinger(np.ones(3) / 3, np.ones(4) / 4)
    with pytest.raises(ValueError):
        bhattacharyya(np.ones(3) / 3, np.ones(4) / 4)
    with pytest.raises(ValueError):
        hellinger_backward(np.ones(3) / 3, np.ones(4) / 4)
    a = np.ones(4) / 4
    for s in (0.0, -1e-6):
        with pytest.raises(ValueError):
            kl_divergence(a, a, s)


hist_pairs = st.tuples(st.integers(0, 2**32 - 1), st.floats(0, 0.9))


@settings(max_examples=200, deadline=None)
@given(hist_pairs)
def test_metric_properties(args):
    seed, sparsity = args
    rng = np.random.default_rng(seed)
    a, b, c = (random_hist(rng, sparsity=sparsity) for _ in range(3))
    hab = hellinger(a, b)
    assert hab == hellinger(b, a)
    assert 0 <= hab <= 1
    assert 0 <= bhattacharyya(a, b) <= 1 + 1e-12
    assert abs(hab**2 + bhattacharyya(a, b) - 1) < 1e-12
    assert hellinger(a, c) <= hab + hellinger(b, c) + 1e-12
    assert kl_divergence(a, b) >= 0
    assert kl_divergence(a, a) == 0


def test_backward_fd():
    rng = np.random.default_rng(3)
    a, b = random_hist(rng), random_hist(rng)
    analytic = hellinger_backward(a, b)
    numeric = oracles.central_diff(lambda x: hellinger(x, b), a, 1e-7)
    assert oracles.mismatch(analytic, numeric, rtol=1e-4, atol=1e-8) <= 1.0


def test_backward_at_minimum_and_linearity():
    a = random_hist(np.random.default_rng(4))
    assert not np.any(hellinger_backward(a, a))
    b = random_hist(np.random.default_rng(5))
    g = hellinger_backward(a, b)
    numeric = oracles.central_diff(lambda x: 2.5 * hellinger(x, b), a, 1e-7)
    assert oracles.mismatch(2.5 * g, numeric, rtol=1e-4, atol=1e-8) <= 1.0


def test_backward_zero_entries_finite():
    a = one_hot(0)
    b = random_hist(np.random.default_rng(6))
    g = hellinger_backward(a, b)
    assert np.all(np.isfinite(g))
