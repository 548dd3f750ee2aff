"""Order statistics of i.i.d. request indices and channel magnitudes.

Discrete laws are indexed from 1 in the formulas (with F(0) = 0); the
Python functions take 0-based positions into a pmf listed in ascending
order of the ordering key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.stats import binom

from .model import DiscreteChannel, DiscreteLaw, QuadratureLaw, RayleighChannel
from .quadrature import default_rule


def _check_rank(n: int, t: int) -> None:
    if n < 1 or not (1 <= t <= n):
        raise ValueError(f"rank t={t} outside [1:{n}]")


@dataclass(frozen=True)
class OrderStatistic:
    """The t-th smallest of N i.i.d. draws from ``base``.

    ``base`` is either a pmf (sequence, ascending order) or a Rayleigh channel.
    """

    base: Union[Sequence[float], np.ndarray, RayleighChannel]
    N: int
    t: int

    def __post_init__(self):
        _check_rank(self.N, self.t)


def _log_coef(n: int, t: int) -> float:
    # log(t * C(n, t))
    return math.log(t) + math.lgamma(n + 1) - math.lgamma(t + 1) - math.lgamma(n - t + 1)


def rank_weight(n: int, t: int, u, s=None):
    """Density of F(H_(t)) on (0, 1): t C(n,t) u^(t-1) (1-u)^(n-t)."""
    _check_rank(n, t)
    u = np.asarray(u, dtype=float)
    s = 1.0 - u if s is None else np.asarray(s, dtype=float)
    c = _log_coef(n, t)
    with np.errstate(divide="ignore"):
        lu = np.log(u) * (t - 1) if t > 1 else 0.0
        ls = np.log(s) * (n - t) if n > t else 0.0
    return np.exp(c + lu + ls)


def continuous_order_density(stat: OrderStatistic, h) -> np.ndarray:
    """p_{H_(t)}(h) = t p(h) C(N,t) F(h)^(t-1) (1 - F(h))^(N-t)."""
    ch = stat.base
    if not isinstance(ch, RayleighChannel):
        raise TypeError("continuous_order_density needs a continuous base law")
    h = np.asarray(h, dtype=float)
    return ch.pdf(h) * rank_weight(stat.N, stat.t, ch.cdf(h), ch.sf(h))


def continuous_order_cdf(stat: OrderStatistic, h) -> np.ndarray:
    """Pr{H_(t) <= h}: at least t of the N draws fall at or below h."""
    ch = stat.base
    F = np.asarray(ch.cdf(h), dtype=float)
    return _at_least(F, stat.N, stat.t)


def _at_least(F, n: int, t: int):
    """Sum over b >= t of C(n,b) F^b (1-F)^(n-b)."""
    F = np.asarray(F, dtype=float)
    if n <= 60:
        total = np.zeros_like(F)
        for b in range(t, n + 1):
            total = total + math.comb(n, b) * F ** b * (1.0 - F) ** (n - b)
        return total
    # binomial upper tail; the explicit sum loses precision for large n
    return binom.sf(t - 1, n, F)


def discrete_order_pmf(stat: OrderStatistic, m: int) -> float:
    """Pr{M_(t) = m} for the 1-based support point ``m``.

    Sum over b >= t of C(N,b) [F(m)^b (1-F(m))^(N-b) - F(m-1)^b (1-F(m-1))^(N-b)].
    """
    pmf = np.asarray(stat.base, dtype=float)
    if not (1 <= m <= pmf.size):
        raise ValueError(f"support point {m} outside [1:{pmf.size}]")
    cdf = np.concatenate([[0.0], np.cumsum(pmf)])
    cdf[-1] = 1.0
    hi = _at_least(cdf[m], stat.N, stat.t)
    lo = _at_least(cdf[m - 1], stat.N, stat.t)
    return float(hi - lo)


def discrete_order_table(pmf, n: int) -> np.ndarray:
    """(n x K) matrix whose row t-1 is the pmf of the t-th smallest draw."""
    pmf = np.asarray(pmf, dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum(pmf)])
    cdf[-1] = 1.0
    out = np.empty((n, pmf.size))
    for t in range(1, n + 1):
        c = _at_least(cdf, n, t)
        out[t - 1] = np.diff(c)
    return np.clip(out, 0.0, None)


def rank_law(channel, n: int, t: int, scale: float = 1.0):
    """Expectation helper for the t-th smallest of n channel magnitudes."""
    _check_rank(n, t)
    if isinstance(channel, DiscreteChannel):
        asc = channel.probs[::-1]
        row = discrete_order_table(asc, n)[t - 1]
        return DiscreteLaw(channel.magnitudes, row[::-1] * scale)
    return QuadratureLaw(channel, weight=lambda u, s: rank_weight(n, t, u, s), scale=scale)


def _rank_weight_matrix(n: int, r: np.ndarray, logc: np.ndarray, u, s) -> np.ndarray:
    """Rows: rank densities t C(n,t) u^(t-1) (1-u)^(n-t) for each rank in ``r``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lu = np.log(np.asarray(u, dtype=float).ravel())
        ls = np.log(np.asarray(s, dtype=float).ravel())
        a = (r - 1)[:, None] * lu[None, :]
        b = (n - r)[:, None] * ls[None, :]
    # 0 * log(0) = 0
    a = np.where((r - 1)[:, None] == 0, 0.0, a)
    b = np.where((n - r)[:, None] == 0, 0.0, b)
    return np.exp(logc[:, None] + a + b)


def rank_mixture_laws(channel, n: int, ranks: Sequence[int], coefs) -> list:
    """One law per row of ``coefs``: sum_k coefs[i, k] * (law of rank ranks[k] of n).

    Continuous laws share the rank-density matrix at the base quadrature nodes.
    """
    coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
    r = np.asarray(list(ranks), dtype=float)
    if isinstance(channel, DiscreteChannel):
        table = discrete_order_table(channel.probs[::-1], n)[r.astype(int) - 1]
        return [DiscreteLaw(channel.magnitudes, (c @ table)[::-1]) for c in coefs]

    logc = np.array([_log_coef(n, int(k)) for k in r])
    rule = default_rule()
    base = _rank_weight_matrix(n, r, logc, rule.u, rule.s)
    node_w = coefs @ base
    laws = []
    for i, c in enumerate(coefs):
        keep = c > 0

        def weight(u, s, c=c[keep], rk=r[keep], lc=logc[keep]):
            u = np.asarray(u, dtype=float)
            return (c @ _rank_weight_matrix(n, rk, lc, u, s)).reshape(u.shape)

        laws.append(QuadratureLaw(channel, weight=weight, node_weights=node_w[i].reshape(rule.u.shape)))
    return laws


def rank_mixture_law(channel, n: int, ranks: Sequence[int], coefs: Sequence[float]):
    """Law of sum_k coefs[k] * (law of rank ranks[k] out of n)."""
    return rank_mixture_laws(channel, n, ranks, [coefs])[0]
