"""Ordered diagonal linear transmission over parallel fading channels.

N measurements are sorted by variance and mapped one-to-one onto the N
strongest of ``N + offset`` channels (also sorted), so rank t of the
measurements rides channel rank ``t + offset``.  Expectations treat the
two order-statistic families as independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import CompositeSource, DiscreteChannel, DiscreteLaw, FadingChannel, QuadratureLaw, build_partition
from .orderstats import discrete_order_table, rank_law, rank_mixture_laws
from .waterfill import CellGroup, Multiplier, cell_gain, waterfill_cells


@dataclass(frozen=True)
class ParallelProblem:
    source: CompositeSource
    channel: FadingChannel
    N: int
    P: float
    offset: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.offset < 0:
            raise ValueError("rank offset must be >= 0")
        if self.P < 0:
            raise ValueError("power must be non-negative")

    @property
    def n_channels(self) -> int:
        return self.N + self.offset

    def measurement_rank_table(self) -> np.ndarray:
        """(N x J) pmf of the parameter at each rank, columns in stored order.

        Rank 1 is the smallest variance.  Stored order is descending variance,
        so the ascending pmf is the reversed probability vector.
        """
        asc = self.source.request_probs[::-1]
        return discrete_order_table(asc, self.N)[:, ::-1]


@dataclass(frozen=True)
class DiagonalSolution:
    problem: ParallelProblem
    multiplier: Multiplier
    avg_power: float
    avg_distortion: float

    @property
    def value(self) -> float:
        return self.multiplier.value

    def gain(self, t: int, h, m: int):
        """Encoder gain for rank t (1-based) at channel magnitude h, parameter m."""
        if not 1 <= t <= self.problem.N:
            raise ValueError("rank out of range")
        return cell_gain(self.value, h, self.problem.source.sigmas[m])

    def gains(self) -> list[Callable]:
        return [lambda h, m, t=t: self.gain(t, h, m) for t in range(1, self.problem.N + 1)]

    def kinks(self) -> list[float]:
        if self.value <= 0:
            return []
        return [1.0 / (self.value * s) for s in self.problem.source.sigmas]


def _groups(problem: ParallelProblem) -> tuple[CellGroup, ...]:
    table = problem.measurement_rank_table()
    N, e = problem.N, problem.offset
    ranks = [t + e for t in range(1, N + 1)]
    laws = rank_mixture_laws(problem.channel, problem.n_channels, ranks, table.T / N)
    return tuple(CellGroup(float(s), law) for s, law in zip(problem.source.sigmas, laws))


def solve_parallel(problem: ParallelProblem) -> DiagonalSolution:
    """Single multiplier for the rank-averaged power constraint."""
    lam, pw, dist = waterfill_cells(_groups(problem), problem.P, what="delta")
    return DiagonalSolution(problem, lam, pw, dist)


def evaluate_fixed_mapping(problem: ParallelProblem, gains: Sequence[Callable],
                           kinks: Sequence[float] = ()) -> tuple[float, float]:
    """Rank-averaged (power, distortion) of the diagonal encoder ``gains``.

    ``gains[t-1](h, m)`` is the encoder gain for rank t.  ``kinks`` lists
    magnitudes where a gain has a derivative jump (quadrature hint only).
    """
    if len(gains) != problem.N:
        raise ValueError("need one gain function per rank")
    table = problem.measurement_rank_table()
    sig = problem.source.sigmas
    var = problem.source.variances
    pw = dist = 0.0
    for t in range(1, problem.N + 1):
        law = rank_law(problem.channel, problem.n_channels, t + problem.offset)
        f = gains[t - 1]
        for m in range(problem.source.J):
            w = table[t - 1, m]
            if w == 0:
                continue

            def power(h, m=m):
                g = np.asarray(f(h, m), dtype=float)
                if np.any(g < 0):
                    raise ValueError("gains must be non-negative")
                return g * g * var[m]

            def distortion(h, m=m):
                g = np.asarray(f(h, m), dtype=float)
                return var[m] / (h * h * g * g * var[m] + 1.0)

            pw += w * law.expect(power, kinks)
            dist += w * law.expect(distortion, kinks)
    return pw / problem.N, dist / problem.N


def _band_laws(source: CompositeSource, channel) -> list:
    """Channel law restricted to each matched set (parameter m keeps mass p_M(m))."""
    part = build_partition(source, channel)
    if isinstance(channel, DiscreteChannel):
        return [DiscreteLaw(channel.magnitudes, channel.probs * part.virtual[:, m])
                for m in range(source.J)]
    tail = channel.sf(part.boundaries)          # 0 ... 1, upper-tail mass at each edge
    laws = []
    for m in range(source.J):
        a, b = float(tail[m]), float(tail[m + 1])

        def band(u, s, a=a, b=b):
            s = np.asarray(s, dtype=float)
            return ((s >= a) & (s <= b)).astype(float)

        edges = [(1.0 - e, e) for e in (a, b) if 0.0 < e < 1.0]
        laws.append(QuadratureLaw(channel, weight=band, unit_kinks=edges))
    return laws


def ordered_limit(source: CompositeSource, channel, P: float):
    """Limit of the ordered-matching optimum as N grows with the offset fixed.

    Rank t of N measurements and rank t + offset of N + offset channels
    both sit at quantile t/N, so parameter m ends up on the channel values
    of its matched set.  Returns (multiplier, avg power, avg distortion).
    """
    groups = tuple(CellGroup(float(s), law) for s, law in zip(source.sigmas, _band_laws(source, channel)))
    return waterfill_cells(groups, P, what="limit")
