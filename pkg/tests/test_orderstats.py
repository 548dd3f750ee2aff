import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from delaylt.model import DiscreteChannel, RayleighChannel
from delaylt.orderstats import (OrderStatistic, continuous_order_cdf, continuous_order_density,
                                discrete_order_pmf, discrete_order_table, rank_law, rank_mixture_law)


def enumerate_order_pmf(pmf, N, t):
    """Exact pmf of the t-th smallest of N draws by listing all outcomes."""
    pmf = [Fraction(x).limit_denominator(10**6) for x in pmf]
    out = [Fraction(0)] * len(pmf)
    for seq in itertools.product(range(len(pmf)), repeat=N):
        w = Fraction(1)
        for k in seq:
            w *= pmf[k]
        out[sorted(seq)[t - 1]] += w
    return [float(x) for x in out]


def test_two_point_examples():
    p = [0.3, 0.7]
    assert discrete_order_pmf(OrderStatistic(p, 2, 1), 1) == pytest.approx(0.51, abs=1e-15)
    assert discrete_order_pmf(OrderStatistic(p, 2, 1), 2) == pytest.approx(0.49, abs=1e-15)
    assert discrete_order_pmf(OrderStatistic(p, 2, 2), 1) == pytest.approx(0.09, abs=1e-15)
    assert discrete_order_pmf(OrderStatistic(p, 2, 2), 2) == pytest.approx(0.91, abs=1e-15)


def test_single_sample_is_base():
    p = [0.1, 0.3, 0.4, 0.2]
    assert np.allclose([discrete_order_pmf(OrderStatistic(p, 1, 1), m) for m in range(1, 5)], p)


def test_rank_out_of_range():
    with pytest.raises(ValueError):
        OrderStatistic([1.0], 2, 3)
    with pytest.raises(ValueError):
        OrderStatistic([1.0], 0, 1)


@pytest.mark.parametrize("K", [1, 2, 3, 4])
@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_discrete_matches_enumeration(N, K):
    rng = np.random.default_rng(10 * N + K)
    p = rng.random(K) + 0.05
    p = np.round(p / p.sum(), 6)
    p[-1] = 1 - p[:-1].sum()
    tab = discrete_order_table(p, N)
    for t in range(1, N + 1):
        exact = enumerate_order_pmf(p, N, t)
        assert np.allclose(tab[t - 1], exact, atol=1e-12, rtol=0)
        for m in range(1, K + 1):
            assert discrete_order_pmf(OrderStatistic(p, N, t), m) == pytest.approx(exact[m - 1], abs=1e-12)


@pytest.mark.parametrize("N", [1, 2, 3, 4, 5])
def test_continuous_density_integrates(N):
    ch = RayleighChannel(3.0)
    for t in range(1, N + 1):
        stat = OrderStatistic(ch, N, t)
        val, _ = integrate.quad(lambda h: float(continuous_order_density(stat, h)), 0, 150,
                                limit=200, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-6)


def test_continuous_small_cases():
    ch = RayleighChannel(3.0)
    h = np.linspace(0.1, 15, 30)
    assert np.allclose(continuous_order_density(OrderStatistic(ch, 1, 1), h), ch.pdf(h))
    assert np.allclose(continuous_order_density(OrderStatistic(ch, 2, 2), h), 2 * ch.pdf(h) * ch.cdf(h))


def test_cdf_matches_density():
    ch = RayleighChannel(2.0)
    stat = OrderStatistic(ch, 5, 3)
    for x in (1.0, 2.5, 4.0):
        val, _ = integrate.quad(lambda h: float(continuous_order_density(stat, h)), 0, x)
        assert continuous_order_cdf(stat, x) == pytest.approx(val, abs=1e-9)


@given(st.integers(1, 8), st.floats(0.01, 12.0))
def test_exchangeability(N, h):
    ch = RayleighChannel(3.0)
    tot = sum(continuous_order_density(OrderStatistic(ch, N, t), h) for t in range(1, N + 1)) / N
    assert tot == pytest.approx(float(ch.pdf(h)), rel=1e-10, abs=1e-300)


@given(st.integers(2, 8), st.floats(0.01, 12.0))
def test_monotone_coupling(N, h):
    ch = RayleighChannel(3.0)
    cdfs = [float(continuous_order_cdf(OrderStatistic(ch, N, t), h)) for t in range(1, N + 1)]
    assert all(a >= b - 1e-14 for a, b in zip(cdfs, cdfs[1:]))


@given(st.integers(1, 6), st.lists(st.floats(0.05, 1), min_size=1, max_size=4))
def test_discrete_exchangeability(N, w):
    p = np.array(w) / sum(w)
    tab = discrete_order_table(p, N)
    assert np.allclose(tab.mean(axis=0), p, atol=1e-12)
    assert np.allclose(tab.sum(axis=1), 1.0, atol=1e-12)


def test_large_n_uses_stable_tail():
    p = [0.2, 0.5, 0.3]
    tab = discrete_order_table(p, 200)
    assert np.allclose(tab.sum(axis=1), 1.0, atol=1e-10)
    assert np.allclose(tab.mean(axis=0), p, atol=1e-10)


def test_rank_law_max_of_two():
    ch = DiscreteChannel([1.0, 2.0], [0.5, 0.5])
    law = rank_law(ch, 2, 2)
    assert np.allclose(law.weights, [0.75, 0.25])       # magnitudes descending: 2, 1


def test_rank_law_continuous_mass_and_mean():
    ch = RayleighChannel(3.0)
    for N, t in ((1, 1), (3, 2), (6, 6), (40, 1)):
        law = rank_law(ch, N, t)
        assert law.mass == pytest.approx(1.0, abs=1e-10)
        stat = OrderStatistic(ch, N, t)
        mean, _ = integrate.quad(lambda h: h * float(continuous_order_density(stat, h)), 0, 80, limit=200)
        assert law.expect(lambda h: h) == pytest.approx(mean, rel=1e-8)


def test_rank_mixture_equals_sum():
    ch = RayleighChannel(3.0)
    mix = rank_mixture_law(ch, 5, [2, 4], [0.3, 0.7])
    f = lambda h: np.log1p(h)
    ref = 0.3 * rank_law(ch, 5, 2).expect(f) + 0.7 * rank_law(ch, 5, 4).expect(f)
    assert mix.expect(f) == pytest.approx(ref, rel=1e-12)
    assert mix.expect(f, kinks=[2.0]) == pytest.approx(ref, rel=1e-9)
