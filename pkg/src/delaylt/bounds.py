"""Theoretical (separation) and linear-transmission lower bounds."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import CompositeSource, FadingChannel
from .parallel import ParallelProblem, ordered_limit, solve_parallel
from .waterfill import NumericalFailure, capacity_no_csi, ergodic_capacity, reverse_waterfill

log = logging.getLogger(__name__)

DEFAULT_U_MAX = 64


class BoundCapWarning(UserWarning):
    """The LLB maximiser sits on the search cap."""


@dataclass(frozen=True)
class BoundResult:
    kind: str                 # "TLB-CSI", "TLB-noCSI" or "LLB"
    power: float
    distortion: float
    aux: dict = field(default_factory=dict)


def tlb(source: CompositeSource, channel: FadingChannel, P: float,
        encoder_csi: bool = True) -> BoundResult:
    """Distortion-rate function evaluated at the ergodic capacity."""
    if P < 0:
        raise ValueError("power must be non-negative")
    if encoder_csi:
        alpha, cap = ergodic_capacity(channel, P)
    else:
        alpha, cap = None, capacity_no_csi(channel, P)
    rw = reverse_waterfill(source, cap)
    kind = "TLB-CSI" if encoder_csi else "TLB-noCSI"
    return BoundResult(kind, P, rw.avg_distortion,
                       dict(alpha=alpha, beta=rw.beta, capacity=cap))


def llb(source: CompositeSource, channel: FadingChannel, d: int, P: float,
        u_max: int = DEFAULT_U_MAX, limit: bool = True) -> BoundResult:
    """Supremum over u of the non-causal ordered-matching distortion D*(d, u, P).

    u measurements ride the u strongest of c = d + u - 1 channels.  Every
    u up to ``u_max`` is solved; with ``limit`` the u -> infinity value
    (which does not depend on d) is also a candidate, so a curve still
    rising at the cap is not cut short.  ``aux['u_star']`` is ``inf`` when
    the limit is the maximiser.
    """
    if d < 1 or u_max < 1:
        raise ValueError("need d >= 1 and u_max >= 1")
    if P < 0:
        raise ValueError("power must be non-negative")
    curve: dict[int, float] = {}
    multipliers: dict[int, float] = {}
    failed: dict[int, str] = {}
    for u in range(1, u_max + 1):
        try:
            sol = solve_parallel(ParallelProblem(source, channel, N=u, P=P, offset=d - 1))
        except NumericalFailure as exc:
            failed[u] = str(exc)
            log.warning("LLB solve failed at u=%d: %s", u, exc)
            continue
        curve[u] = sol.avg_distortion
        multipliers[u] = sol.value
    if not curve:
        raise NumericalFailure("LLB: every inner solve failed")
    u_star = max(curve, key=lambda k: (curve[k], -k))
    at_cap = u_star == u_max and u_max > 1
    if at_cap:
        warnings.warn(f"LLB maximiser at the search cap u_max={u_max}", BoundCapWarning)
    value, zeta = curve[u_star], multipliers[u_star]
    lim = None
    if limit:
        lam, _, lim = ordered_limit(source, channel, P)
        if lim > value:
            value, zeta, u_star = lim, lam.value, math.inf
    return BoundResult("LLB", P, value,
                       dict(u_star=u_star, zeta=zeta, curve=curve, limit=lim,
                            failed=failed, at_cap=at_cap, d=d))
