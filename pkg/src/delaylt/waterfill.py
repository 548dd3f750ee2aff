"""Water-filling allocators and the Lagrange-multiplier bisection engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .model import CompositeSource, DiscreteChannel, DiscreteLaw, FadingChannel, MagnitudeLaw

RTOL = 1e-9
MAX_ITER = 200
MAX_GROWTH = 200


class NumericalFailure(RuntimeError):
    """A multiplier search or quadrature did not meet its tolerance."""


@dataclass(frozen=True)
class Multiplier:
    value: float
    achieved: float
    target: float
    tolerance: float
    iterations: int

    @property
    def converged(self) -> bool:
        return abs(self.achieved - self.target) <= self.tolerance


def bisect_multiplier(constraint: Callable[[float], float], target: float, *,
                      increasing: bool = True, lower: float = 0.0, upper: float = 1.0,
                      rtol: float = RTOL, max_iter: int = MAX_ITER,
                      what: str = "multiplier") -> Multiplier:
    """Find x >= lower with constraint(x) == target for a monotone constraint.

    The upper bracket grows geometrically until it overshoots; the root is
    then refined inside the bracket to floating-point resolution.
    """
    tol = rtol * max(1.0, abs(target))
    sign = 1.0 if increasing else -1.0

    def over(x):
        return sign * (constraint(x) - target) >= 0.0

    f_lo = constraint(lower)
    if sign * (f_lo - target) >= 0.0:
        return Multiplier(lower, f_lo, target, tol, 0)
    hi = max(upper, lower + 1.0)
    grown = 0
    while not over(hi):
        lower_cand = hi
        hi *= 2.0
        grown += 1
        if grown > MAX_GROWTH or not math.isfinite(hi):
            raise NumericalFailure(f"{what}: could not bracket target {target!r}")
        lower = lower_cand
    lo = lower
    # Brent's method inside the monotone bracket; same bracket contract as
    # plain bisection but far fewer constraint evaluations.
    counter = [0]

    def resid(x):
        counter[0] += 1
        return constraint(x) - target

    try:
        root = brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                      maxiter=max_iter)
        lo = hi = root
    except ValueError:
        pass
    it = counter[0]
    f_lo, f_hi = constraint(lo), constraint(hi)
    x, fx = (lo, f_lo) if abs(f_lo - target) <= abs(f_hi - target) else (hi, f_hi)
    res = Multiplier(x, fx, target, tol, it)
    if not res.converged:
        raise NumericalFailure(f"{what}: residual {fx - target:.3e} exceeds {tol:.3e}")
    return res


# --------------------------------------------------------------------------
# Per-cell rules
# --------------------------------------------------------------------------

def mmse_gain(f, h, var):
    """Linear MMSE decoder gain |h| f sigma^2 / (|h|^2 f^2 sigma^2 + 1)."""
    f = np.asarray(f, dtype=float)
    h = np.abs(np.asarray(h, dtype=float))
    return h * f * var / (h * h * f * f * var + 1.0)


def cell_power(lam, h, sigma):
    """(sigma/|h|) [lam - 1/(|h| sigma)]^+, equivalently [lam sigma/|h| - 1/|h|^2]^+."""
    h = np.asarray(h, dtype=float)
    return np.maximum(lam * sigma / h - 1.0 / (h * h), 0.0)


def cell_distortion(lam, h, sigma):
    """(sigma/|h|) min(1/lam, |h| sigma)."""
    h = np.asarray(h, dtype=float)
    if lam <= 0:
        return np.full_like(h, sigma * sigma)
    return sigma / h * np.minimum(1.0 / lam, h * sigma)


def cell_gain(lam, h, sigma):
    h = np.asarray(h, dtype=float)
    return np.sqrt(np.maximum(lam / (h * sigma) - 1.0 / (h * h * sigma * sigma), 0.0))


def lthm_power_rule(mu: float, h: float, sigma: float) -> tuple[float, float]:
    """Power [mu sigma/|h| - 1/|h|^2]^+ and the matching distortion sigma^2/(|h|^2 P + 1)."""
    if h <= 0:
        raise ValueError("channel magnitude must be positive")
    p = max(mu * sigma / h - 1.0 / (h * h), 0.0)
    return p, sigma * sigma / (h * h * p + 1.0)


# --------------------------------------------------------------------------
# Generic cell water-filling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CellGroup:
    """All channel cells paired with one parameter standard deviation."""

    sigma: float
    law: MagnitudeLaw          # measure carries the probability of the group


def _group_power(lam: float, g: CellGroup) -> float:
    if lam <= 0:
        return 0.0
    return g.law.expect(lambda h: cell_power(lam, h, g.sigma), kinks=[1.0 / (lam * g.sigma)])


def _group_distortion(lam: float, g: CellGroup) -> float:
    if lam <= 0:
        return g.sigma ** 2 * g.law.mass
    return g.law.expect(lambda h: cell_distortion(lam, h, g.sigma), kinks=[1.0 / (lam * g.sigma)])


def waterfill_cells(groups: Sequence[CellGroup], P: float, *, what: str = "lambda"):
    """Solve min E[D] s.t. E[P] = P over the given cell groups.

    Returns (multiplier, average power, average distortion).
    """
    if P < 0 or not math.isfinite(P):
        raise ValueError("power must be a finite non-negative number")
    total = lambda lam: sum(_group_power(lam, g) for g in groups)
    if P == 0:
        lam = Multiplier(0.0, 0.0, 0.0, 0.0, 0)
    else:
        start = min(1.0 / (_max_h(g) * g.sigma) for g in groups)
        lam = bisect_multiplier(total, P, lower=0.0, upper=max(start, 1e-12), what=what)
    dist = sum(_group_distortion(lam.value, g) for g in groups)
    return lam, lam.achieved, dist


def _max_h(g: CellGroup) -> float:
    if isinstance(g.law, DiscreteLaw):
        return float(np.max(g.law.values[g.law.weights > 0], initial=1.0))
    return 1.0


@dataclass(frozen=True)
class AllocationTable:
    """Optimal per-cell power/distortion under one multiplier.

    ``groups`` holds one entry per parameter (index = parameter index).
    """

    multiplier: Multiplier
    sigmas: np.ndarray
    groups: tuple
    avg_power: float
    avg_distortion: float

    @property
    def lam(self) -> float:
        return self.multiplier.value

    def power(self, h, m: int):
        return cell_power(self.lam, h, self.sigmas[m])

    def distortion(self, h, m: int):
        return cell_distortion(self.lam, h, self.sigmas[m])

    def gain(self, h, m: int):
        return cell_gain(self.lam, h, self.sigmas[m])

    def cells(self) -> list[dict]:
        """Entries for every (state, parameter) cell of a discrete channel."""
        out = []
        for m, g in enumerate(self.groups):
            if not isinstance(g.law, DiscreteLaw):
                raise TypeError("cells() is only defined for discrete channels")
            for h, w in zip(g.law.values, g.law.weights):
                out.append(dict(h=float(h), m=m, prob=float(w),
                                power=float(self.power(h, m)),
                                distortion=float(self.distortion(h, m)),
                                gain=float(self.gain(h, m))))
        return out


def strict_delay_optimal(source: CompositeSource, channel: FadingChannel, P: float) -> AllocationTable:
    """Optimal linear scheme under a strict delay constraint with CSI at both ends."""
    base = channel.law()
    groups = tuple(CellGroup(float(s), base.scaled(float(p)))
                   for s, p in zip(source.sigmas, source.request_probs))
    lam, pw, dist = waterfill_cells(groups, P)
    return AllocationTable(lam, source.sigmas.copy(), groups, pw, dist)


def kkt_residuals(table: AllocationTable) -> list[tuple[float, int, float]]:
    """Per discrete cell, the violation of the water-level condition.

    Active cells need lam = 1/(|h| sigma) + |h| P / sigma; inactive cells
    need lam <= 1/(|h| sigma).
    """
    out = []
    lam = table.lam
    for c in table.cells():
        s = table.sigmas[c["m"]]
        h = c["h"]
        if c["power"] > 0:
            r = abs(1.0 / (h * s) + h * c["power"] / s - lam)
        else:
            r = max(lam - 1.0 / (h * s), 0.0)
        out.append((h, c["m"], r))
    return out


# --------------------------------------------------------------------------
# Ergodic capacity and reverse water-filling
# --------------------------------------------------------------------------

def ergodic_capacity(channel: FadingChannel, P: float) -> tuple[float, float]:
    """(alpha*, capacity in bits/use) with power [alpha - 1/|h|^2]^+."""
    if P < 0 or not math.isfinite(P):
        raise ValueError("power must be a finite non-negative number")
    law = channel.law()
    if P == 0:
        return 0.0, 0.0

    def power(alpha):
        if alpha <= 0:
            return 0.0
        return law.expect(lambda h: np.maximum(alpha - 1.0 / (h * h), 0.0),
                          kinks=[1.0 / math.sqrt(alpha)])

    a = bisect_multiplier(power, P, upper=1.0, what="alpha").value
    cap = law.expect(lambda h: 0.5 * np.log2(np.maximum(a * h * h, 1.0)),
                     kinks=[1.0 / math.sqrt(a)])
    return a, cap


def capacity_no_csi(channel: FadingChannel, P: float) -> float:
    """E[0.5 log2(1 + |h|^2 P)] with constant transmit power."""
    if P < 0:
        raise ValueError("power must be non-negative")
    return channel.law().expect(lambda h: 0.5 * np.log2(1.0 + h * h * P))


@dataclass(frozen=True)
class ReverseWaterfill:
    beta: float
    rates: np.ndarray
    distortions: np.ndarray
    avg_distortion: float


def reverse_waterfill(source: CompositeSource, rate: float) -> ReverseWaterfill:
    """Distortion-rate point of the composite Gaussian source at ``rate`` bits."""
    if rate < 0 or not math.isfinite(rate):
        raise ValueError("rate must be a finite non-negative number")
    var, p = source.variances, source.request_probs
    vmax = float(var.max())

    def avg_rate(beta):
        return float(np.dot(p, 0.5 * np.maximum(np.log2(var / beta), 0.0)))

    if rate == 0:
        beta = vmax
    else:
        # bisect on t = log2(vmax / beta) >= 0, increasing in t
        t = bisect_multiplier(lambda t: avg_rate(vmax * 2.0 ** (-t)), rate,
                              upper=2.0 * rate, what="beta")
        beta = vmax * 2.0 ** (-t.value)
    rates = 0.5 * np.maximum(np.log2(var / beta), 0.0)
    dists = np.minimum(beta, var)
    return ReverseWaterfill(beta, rates, dists, float(np.dot(p, dists)))
