"""Linear transmission without channel knowledge at the encoder.

Covers the optimal strict-delay allocation (one gain per parameter) and
the two-slot evaluator that compares a diagonal scheme with a repetition
scheme on a two-state source and channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundResult, tlb
from .model import CompositeSource, FadingChannel
from .waterfill import Multiplier, NumericalFailure, bisect_multiplier


class PsiCurve:
    """Psi(P) = E[|h|^2 / (|h|^2 P + 1)^2] and its inverse.

    Psi is the magnitude of the derivative of E[1/(|h|^2 P + 1)], so it is
    strictly decreasing with Psi(0) = E[|h|^2].
    """

    def __init__(self, channel: FadingChannel):
        self.channel = channel
        self._law = channel.law()
        self.cache: dict[float, float] = {}
        self.decreasing = True
        self.psi0 = self(0.0)

    def __call__(self, P: float) -> float:
        P = float(P)
        if P < 0:
            raise ValueError("power must be non-negative")
        v = self.cache.get(P)
        if v is None:
            v = float(self._law.expect(lambda h: h * h / (h * h * P + 1.0) ** 2))
            self.cache[P] = v
        return v

    def inverse(self, y: float) -> float:
        """Smallest P >= 0 with Psi(P) <= y; 0 when y >= Psi(0)."""
        if y >= self.psi0:
            return 0.0
        if y <= 0:
            raise NumericalFailure("Psi inverse of a non-positive value is unbounded")
        m = bisect_multiplier(self, y, increasing=False, upper=1.0 / y, rtol=1e-13,
                              what="psi inverse")
        return m.value

    def expected_distortion(self, P: float) -> float:
        """E[1/(|h|^2 P + 1)] (multiply by the variance)."""
        return float(self._law.expect(lambda h: 1.0 / (h * h * P + 1.0)))


@dataclass(frozen=True)
class NoCsiTable:
    """Per-parameter powers P(m) = f(m)^2 sigma_m^2 under one multiplier."""

    multiplier: Multiplier
    variances: np.ndarray
    powers: np.ndarray
    distortions: np.ndarray
    avg_power: float
    avg_distortion: float

    @property
    def lam(self) -> float:
        return self.multiplier.value

    @property
    def gains(self) -> np.ndarray:
        return np.sqrt(self.powers / self.variances)


def no_csi_strict(source: CompositeSource, channel: FadingChannel, P: float,
                  psi: PsiCurve | None = None) -> NoCsiTable:
    """Optimal strict-delay gains when only the decoder sees the channel."""
    if P < 0 or not math.isfinite(P):
        raise ValueError("power must be a finite non-negative number")
    psi = psi or PsiCurve(channel)
    var, p = source.variances, source.request_probs

    def powers(x):
        # x = 1/lambda, so the target Psi level lambda/sigma^2 falls with x
        if x <= 0:
            return np.zeros_like(var)
        return np.array([psi.inverse(1.0 / (x * v)) for v in var])

    if P == 0:
        mult = Multiplier(math.inf, 0.0, 0.0, 0.0, 0)
        pw = np.zeros_like(var)
    else:
        start = 1.0 / (psi.psi0 * var.max())
        x = bisect_multiplier(lambda x: float(p @ powers(x)), P, upper=start, what="no-CSI lambda")
        pw = powers(x.value)
        mult = Multiplier(1.0 / x.value, x.achieved, P, x.tolerance, x.iterations)
    dist = var * np.array([psi.expected_distortion(q) for q in pw])
    return NoCsiTable(mult, var.copy(), pw, dist, float(p @ pw), float(p @ dist))


def tlb_no_csi(source: CompositeSource, channel: FadingChannel, P: float) -> BoundResult:
    return tlb(source, channel, P, encoder_csi=False)


# --------------------------------------------------------------------------
# Two-slot counter-example
# --------------------------------------------------------------------------

SPLIT_TOL = 1e-9


@dataclass(frozen=True)
class CounterexampleSpec:
    """Two parameters (variances var1 and 0) over two states (h1 and 0).

    ``P11`` is the power spent when both slots request parameter 1, shared
    equally by the two measurements; ``P12``/``P21`` cover the mixed
    request pairs.  The all-zero pair gets no power.
    """

    p1: float = 0.5
    var1: float = 1.0
    h1: float = 1.0
    P: float = 1.0
    P11: float = 8.0 / 3.0
    P12: float = 8.0 / 3.0
    P21: float = 8.0 / 3.0

    def __post_init__(self):
        if not 0.0 < self.p1 < 1.0:
            raise ValueError("p1 must lie in (0, 1)")
        if self.var1 <= 0 or self.h1 <= 0:
            raise ValueError("variance and channel magnitude must be positive")
        if min(self.P11, self.P12, self.P21) < 0:
            raise ValueError("powers must be non-negative")
        spent = self.spent
        if abs(spent - self.P) > SPLIT_TOL * max(1.0, self.P):
            raise ValueError(f"split spends {spent!r}, budget is {self.P!r}")

    @property
    def p2(self) -> float:
        return 1.0 - self.p1

    @property
    def spent(self) -> float:
        p1, p2 = self.p1, self.p2
        return 0.5 * (self.P11 * p1 * p1 + (self.P12 + self.P21) * p1 * p2)

    @classmethod
    def from_mixed(cls, P12: float, P21: float, *, p1: float = 0.5, var1: float = 1.0,
                   h1: float = 1.0, P: float = 1.0) -> "CounterexampleSpec":
        """Spend whatever the mixed pairs leave on the (1, 1) pair."""
        p2 = 1.0 - p1
        P11 = (2.0 * P - (P12 + P21) * p1 * p2) / (p1 * p1)
        return cls(p1=p1, var1=var1, h1=h1, P=P, P11=P11, P12=P12, P21=P21)


def counterexample(spec: CounterexampleSpec) -> tuple[float, float]:
    """(D1, D2): average distortion of the diagonal and repetition schemes."""
    p1, p2, v, g = spec.p1, spec.p2, spec.var1, spec.h1 * spec.h1
    a11, a12, a21 = g * spec.P11, g * spec.P12, g * spec.P21
    both = p1 * p1 * (p1 * v / (a11 / 2.0 + 1.0) + p2 * v)
    d1 = both + 0.5 * p1 * p2 * (p1 * v / (a12 + 1.0) + p1 * v / (a21 + 1.0) + 2.0 * p2 * v)
    d2 = both + 0.5 * p1 * p2 * (2.0 * p2 * p2 * v
                                 + p1 * p1 * v / (a12 + 1.0) + p1 * p1 * v / (a21 + 1.0)
                                 + 2.0 * p1 * p2 * v / (a12 / 2.0 + 1.0)
                                 + 2.0 * p1 * p2 * v / (a21 / 2.0 + 1.0))
    return float(d1), float(d2)
