import itertools

import numpy as np
import pytest

from delaylt.model import CompositeSource, DiscreteChannel
from delaylt.parallel import ParallelProblem, evaluate_fixed_mapping, ordered_limit, solve_parallel
from delaylt.waterfill import cell_gain, strict_delay_optimal

from conftest import zoom_root


def test_rank_one_reduces_to_strict(src, disc, ray):
    for ch in (disc, ray):
        for P in (0.5, 10.0):
            a = solve_parallel(ParallelProblem(src, ch, 1, P))
            b = strict_delay_optimal(src, ch, P)
            assert a.avg_distortion == pytest.approx(b.avg_distortion, rel=1e-9)
            assert a.value == pytest.approx(b.lam, rel=1e-9)


def test_exchangeable_two_channel(unit_source, two_state):
    sol = solve_parallel(ParallelProblem(unit_source, two_state, 2, 1.0))
    assert sol.avg_distortion == pytest.approx(4.5 / 13, abs=1e-9)


def test_best_of_two_oracle(unit_source, two_state):
    # max of two uniform {1, 2} draws: P(2) = 3/4; water level by grid search
    w = {1.0: 0.25, 2.0: 0.75}
    power = lambda lam: sum(p * max(lam / h - 1 / h ** 2, 0) for h, p in w.items())
    lam = zoom_root(power, 1.0, 0, 100)
    dist = sum(p * (1 / (h * lam) if lam * h > 1 else 1.0) for h, p in w.items())
    sol = solve_parallel(ParallelProblem(unit_source, two_state, 1, 1.0, offset=1))
    assert sol.value == pytest.approx(lam, abs=1e-9)
    assert sol.avg_distortion == pytest.approx(dist, abs=1e-9)


def test_measurement_rank_table_orientation():
    src = CompositeSource([4.0, 1.0], [0.3, 0.7])
    tab = ParallelProblem(src, DiscreteChannel([1.0], [1.0]), 2, 1.0).measurement_rank_table()
    # rank 1 = smaller variance (stored index 1); it is the variance-1 one unless both are 4
    assert tab[0, 1] == pytest.approx(1 - 0.3 ** 2)
    assert tab[1, 0] == pytest.approx(1 - 0.7 ** 2)


def test_fixed_mapping_zero_and_self(src, disc, ray):
    for ch in (disc, ray):
        prob = ParallelProblem(src, ch, 3, 5.0, offset=1)
        zero = [lambda h, m: np.zeros_like(np.asarray(h, dtype=float))] * 3
        P, D = evaluate_fixed_mapping(prob, zero)
        assert P == 0.0 and D == pytest.approx(3.0, rel=1e-10)
        sol = solve_parallel(prob)
        P, D = evaluate_fixed_mapping(prob, sol.gains(), sol.kinks())
        assert P == pytest.approx(5.0, rel=1e-9)
        assert D == pytest.approx(sol.avg_distortion, rel=1e-9)


def test_perturbed_gain_is_worse(src, disc):
    prob = ParallelProblem(src, disc, 2, 5.0)
    sol = solve_parallel(prob)
    gains = sol.gains()
    bumped = [lambda h, m, g=gains[0]: 1.1 * g(h, m), gains[1]]
    P1, D1 = evaluate_fixed_mapping(prob, bumped)
    # the optimal frontier at the new power level is strictly lower
    D_opt = solve_parallel(ParallelProblem(src, disc, 2, P1)).avg_distortion
    assert D1 > D_opt + 1e-9


def _brute_pair(var, hs, P, ordered):
    """Best diagonal assignment over a gain grid for N=2, J=2, two states.

    Each of the two ranks (or the swapped pairing) gets its own gain per
    (channel value, parameter) cell; enumerate all four outcomes for the
    measurement pair and the channel pair.
    """
    sig2 = np.asarray(var)
    hs = np.asarray(hs)
    outcomes = []
    for m1, m2, k1, k2 in itertools.product(range(2), range(2), range(2), range(2)):
        w = 0.25 * 0.25
        ms = sorted([m1, m2], key=lambda m: sig2[m])          # ascending variance
        cs = sorted([k1, k2], key=lambda k: hs[k])            # ascending channel
        if not ordered:
            cs = cs[::-1]
        outcomes.append((w, ms, cs))
    # the optimal per-cell allocation for a fixed pairing is a water-fill
    cells = {}
    for w, ms, cs in outcomes:
        for m, k in zip(ms, cs):
            cells[(m, k)] = cells.get((m, k), 0.0) + w / 2
    sig = np.sqrt(sig2)

    def power(lam):
        return sum(p * max(lam * sig[m] / hs[k] - 1 / hs[k] ** 2, 0) for (m, k), p in cells.items())

    lam = zoom_root(power, P, 0, 1e3)
    return sum(p * (sig[m] / (hs[k] * lam) if lam * sig[m] * hs[k] > 1 else sig2[m])
               for (m, k), p in cells.items())


def test_ordered_beats_anti_ordered():
    var, hs = [3.0, 0.5], [0.5, 2.0]
    src = CompositeSource(var, [0.5, 0.5])
    ch = DiscreteChannel(hs, [0.5, 0.5])
    for P in (0.3, 1.0, 5.0):
        ordered = solve_parallel(ParallelProblem(src, ch, 2, P)).avg_distortion
        assert ordered == pytest.approx(_brute_pair(var, hs, P, True), rel=1e-8)
        assert ordered <= _brute_pair(var, hs, P, False) + 1e-12


def test_ordered_limit_approached(src, ray):
    lim = ordered_limit(src, ray, 10.0)[2]
    big = solve_parallel(ParallelProblem(src, ray, 2000, 10.0)).avg_distortion
    assert big == pytest.approx(lim, rel=2e-3)
