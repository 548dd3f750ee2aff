import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from delaylt.model import CompositeSource, DiscreteChannel, build_partition
from delaylt.strategies import (BufferState, CalibrationFailure, StrategyConfig, asymptotic_matched,
                                buffer_depth, calibrate_mu, draws_from_rng, lthm_drop_floor, match,
                                mu_for_power, run_block, select_measurement, simulate)


def cfg(kind, d, source, channel, mu=1.0):
    return StrategyConfig(kind, d, build_partition(source, channel), mu)


# ---------------------------------------------------------------- reference loop

def reference_match(config, draws):
    """Per-block loop over BufferState/select_measurement."""
    nb, d = draws.shape
    out = np.full((nb, d), -1, dtype=np.int64)
    for b in range(nb):
        buf = BufferState()
        for slot in sorted(range(d), key=lambda i: (draws.req[b, i], draws.key[b, i])):
            buf.add(draws.req[b, slot], slot)
        for j in range(d):
            before = list(zip(buf.params, buf.values))
            m = select_measurement(config, buf, int(draws.cset[b, j]), float(draws.h[b, j]))
            if m is not None:
                gone = [v for p, v in before if (p, v) not in zip(buf.params, buf.values)]
                out[b, j] = int(gone[0])
    return out


@pytest.mark.parametrize("kind", ["LTHM", "LTSM"])
@pytest.mark.parametrize("d", [1, 3, 8, 21])
def test_kernel_matches_reference(src, disc, ray, kind, d):
    rng = np.random.default_rng(d)
    for ch in (disc, ray):
        c = cfg(kind, d, src, ch)
        dr = draws_from_rng(src, ch, c.partition, rng, (60, c.dbar))
        np.testing.assert_array_equal(match(c, dr), reference_match(c, dr))


def test_buffer_depth():
    assert [buffer_depth(d) for d in (1, 2, 3, 4, 5, 41)] == [1, 1, 2, 2, 3, 21]
    with pytest.raises(ValueError):
        buffer_depth(0)


# ---------------------------------------------------------------- selection examples

def test_select_examples(src, ray):
    part = build_partition(src, ray)
    hard = StrategyConfig("LTHM", 3, part, 1.0)
    soft = StrategyConfig("LTSM", 3, part, 1.0)
    buf = BufferState.from_counts([0, 1, 0, 1])
    assert select_measurement(hard, buf, 0, part.midpoints[0]) is None
    assert buf.counts(4).tolist() == [0, 1, 0, 1]
    # soft fallback to the nearest midpoint among stored parameters
    assert select_measurement(soft, buf, 0, part.midpoints[0]) == 1
    assert select_measurement(soft, buf, 0, part.midpoints[0]) == 3
    assert select_measurement(soft, buf, 0, 1.0) is None


def test_select_illustrative_midpoints():
    from delaylt.model import ChannelPartition
    part = ChannelPartition(np.array([np.inf, 5.5, 3.5, 2.0, 0.0]), np.array([6.4, 4.9, 2.9, 1.2]))
    soft = StrategyConfig("LTSM", 7, part, 1.0)
    # stored parameters 2 and 3 (0-based), use in set 0, |h| = 7: 2.9 beats 1.2
    assert select_measurement(soft, BufferState.from_counts([0, 0, 1, 1]), 0, 7.0) == 2
    hard = StrategyConfig("LTHM", 7, part, 1.0)
    assert select_measurement(hard, BufferState.from_counts([0, 0, 1, 1]), 0, 7.0) is None


def test_hard_match_has_priority(src, ray):
    part = build_partition(src, ray)
    soft = StrategyConfig("LTSM", 3, part, 1.0)
    buf = BufferState.from_counts([1, 0, 1, 0])
    # |h| sits on parameter 0's midpoint but the use is in set 2
    assert select_measurement(soft, buf, 2, part.midpoints[0]) == 2


def test_pop_order():
    buf = BufferState()
    for v in (1.0, 2.0, 3.0):
        buf.add(0, v)
    assert buf.pop(0) == 1.0
    assert buf.pop(0, np.random.default_rng(0)) in (2.0, 3.0)


# ---------------------------------------------------------------- block invariants

@given(st.integers(1, 30), st.sampled_from(["LTHM", "LTSM"]), st.integers(0, 2 ** 31))
def test_conservation(d, kind, seed):
    from delaylt.model import reference_rayleigh_channel, reference_source
    src, ch = reference_source(), reference_rayleigh_channel()
    c = cfg(kind, d, src, ch)
    dr = draws_from_rng(src, ch, c.partition, np.random.default_rng(seed), (40, c.dbar))
    r = simulate(c, src, dr)
    assert np.all(r.transmitted + r.dropped == r.requested)
    assert np.all(r.requested.sum(axis=1) == c.dbar)
    assert np.all(r.visits.sum(axis=1) == c.dbar)
    src_slots = match(c, dr)
    for row in src_slots:
        used = row[row >= 0]
        assert used.size == np.unique(used).size
    if kind == "LTHM":
        np.testing.assert_array_equal(r.dropped, np.maximum(r.requested - r.visits, 0))
    else:
        assert np.all(r.dropped == 0)


def test_lthm_single_slot_drop_rate(src, disc):
    c = cfg("LTHM", 1, src, disc)
    dr = draws_from_rng(src, disc, c.partition, np.random.default_rng(7), (200_000, 1))
    r = simulate(c, src, dr)
    rate = r.dropped.sum() / r.n_blocks
    p = src.request_probs
    expect = float(np.sum(p * (1 - p)))
    assert expect == pytest.approx(0.70)
    assert abs(rate - expect) < 4 * math.sqrt(expect * (1 - expect) / r.n_blocks)


def test_analytic_error_values():
    src = CompositeSource([4.0], [1.0])
    ch = DiscreteChannel([2.0], [1.0])
    c = cfg("LTHM", 1, src, ch, mu=1.0)
    dr = draws_from_rng(src, ch, c.partition, np.random.default_rng(0), (5, 1))
    r = simulate(c, src, dr, keep_slots=True)
    # power mu sigma/h - 1/h^2 = 1 - 1/4, error var / (h^2 P + 1)
    assert np.allclose(r.slot_power, 0.75)
    assert np.allclose(r.slot_error, 4.0 / (4 * 0.75 + 1))


def test_noise_estimator_unbiased():
    src = CompositeSource([4.0], [1.0])
    ch = DiscreteChannel([2.0], [1.0])
    c = cfg("LTHM", 1, src, ch, mu=1.0)
    dr = draws_from_rng(src, ch, c.partition, np.random.default_rng(1), (200_000, 1))
    r = simulate(c, src, dr, noise=True)
    se = r.sq_error.std() / math.sqrt(r.n_blocks)
    assert abs(r.mse - 1.0) < 4 * se


def test_uncalibrated_rejected(src, ray):
    c = StrategyConfig("LTSM", 3, build_partition(src, ray))
    dr = draws_from_rng(src, ray, c.partition, np.random.default_rng(0), (2, 2))
    with pytest.raises(ValueError):
        simulate(c, src, dr)
    with pytest.raises(ValueError):
        StrategyConfig("LTXM", 3, c.partition)


def test_run_block(src, ray):
    r = run_block(cfg("LTSM", 5, src, ray), src, ray, np.random.default_rng(3))
    assert r.n_blocks == 1 and r.dbar == 3


# ---------------------------------------------------------------- calibration

def test_mu_for_power_examples():
    h = np.array([1.0, 2.0])
    sig = np.array([1.0, 1.0])
    # both active: (mu - 1) + (mu/2 - 1/4) = 2P
    mu = mu_for_power(h, sig, 2, 1.0)
    assert mu == pytest.approx((2 + 1.25) / 1.5, rel=1e-9)
    assert mu_for_power(h, sig, 2, 0.0) == 0.0
    with pytest.raises(CalibrationFailure):
        mu_for_power(np.array([]), np.array([]), 10, 1.0)


@given(st.lists(st.tuples(st.floats(0.05, 5), st.floats(0.1, 4)), min_size=1, max_size=30),
       st.integers(1, 60), st.floats(1e-3, 100))
def test_mu_for_power_root(cells, extra, P):
    from scipy.optimize import brentq
    h = np.array([c[0] for c in cells])
    sig = np.array([c[1] for c in cells])
    n = len(cells) + extra
    spend = lambda mu: float(np.maximum(mu * sig / h - 1 / h ** 2, 0).sum() / n - P)
    hi = 1.0
    while spend(hi) < 0:
        hi *= 2
    ref = brentq(spend, 0.0, hi, xtol=1e-14, rtol=1e-14)
    assert mu_for_power(h, sig, n, P) == pytest.approx(ref, rel=1e-10)


def test_calibrate_hits_power(src, ray):
    c = cfg("LTSM", 9, src, ray, mu=None)
    dr = draws_from_rng(src, ray, c.partition, np.random.default_rng(0), (20_000, c.dbar))
    mu = calibrate_mu(c, src, 10.0, dr)
    assert simulate(c.with_mu(mu), src, dr).avg_power == pytest.approx(10.0, rel=1e-6)


# ---------------------------------------------------------------- matched limits

def test_asymptotic_matched(src, disc):
    a = asymptotic_matched(src, disc, 10.0)
    assert a.q == pytest.approx(1.0)
    assert a.mu == pytest.approx(10.87, abs=1e-9)
    assert a.power == pytest.approx(10.0, rel=1e-9)
    assert a.distortion == pytest.approx(1 / 10.87, abs=1e-9)


def test_asymptotic_matched_guard(src):
    bad = DiscreteChannel(np.sqrt([10.0, 5.0, 1.0, 0.4]), [0.1, 0.3, 0.4, 0.2])
    with pytest.raises(ValueError, match="parameter 3"):
        asymptotic_matched(src, bad, 1.0)
    with pytest.raises(ValueError):
        asymptotic_matched(src, DiscreteChannel([1.0], [1.0]), 1.0)


def binomial_floor(src, dbar):
    """sum_m E[(A - B)^+] var_m / dbar with A, B independent Binomial(dbar, p_m)."""
    k = np.arange(dbar + 1)
    tot = 0.0
    for v, p in zip(src.variances, src.request_probs):
        pmf = stats.binom.pmf(k, dbar, p)
        tot += v * float(np.sum(np.outer(pmf, pmf) * np.maximum(k[:, None] - k[None, :], 0)))
    return tot / dbar


@pytest.mark.parametrize("dbar", [1, 2, 3, 5])
def test_drop_floor(src, dbar):
    assert lthm_drop_floor(src, dbar) == pytest.approx(binomial_floor(src, dbar), rel=1e-12)


def test_drop_floor_small_cases(src):
    # one slot: mismatch probability sum p(1-p) per variance
    p, v = src.request_probs, src.variances
    assert lthm_drop_floor(src, 1) == pytest.approx(float(np.sum(v * p * (1 - p))))
    assert lthm_drop_floor(src, 2) == pytest.approx(1.8981, abs=1e-4)
