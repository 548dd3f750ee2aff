"""Buffered linear transmission with hard (LTHM) or soft (LTSM) matching.

A block of ``dbar`` measurements is collected, then sent over the next
``dbar`` channel uses.  Each use picks a stored measurement whose
parameter is matched to the current channel set; LTSM falls back to the
stored parameter with the nearest set midpoint, LTHM stays silent.
Powers follow [mu sigma/|h| - 1/|h|^2]^+ for every transmission.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .kernels import select_slots
from .model import (ChannelPartition, CompositeSource, DiscreteChannel, FadingChannel,
                    build_partition, classify_many)
from .waterfill import NumericalFailure, bisect_multiplier, ergodic_capacity, mmse_gain

KINDS = ("LTHM", "LTSM")
CALIBRATION_RTOL = 0.01


class CalibrationFailure(NumericalFailure):
    """The power multiplier could not be bracketed."""


def buffer_depth(d: int) -> int:
    """Largest dbar with 2 dbar - 1 <= d (odd d gives d = 2 dbar - 1 exactly)."""
    if d < 1:
        raise ValueError("delay must be >= 1")
    return (d + 1) // 2


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    d: int
    partition: ChannelPartition
    mu: Optional[float] = None
    P: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"strategy kind must be one of {KINDS}")
        if self.d < 1:
            raise ValueError("delay must be >= 1")
        if self.mu is not None and self.mu < 0:
            raise ValueError("mu must be >= 0")

    @property
    def dbar(self) -> int:
        return buffer_depth(self.d)

    @property
    def soft(self) -> bool:
        return self.kind == "LTSM"

    def with_mu(self, mu: float) -> "StrategyConfig":
        return replace(self, mu=float(mu))


def make_config(kind: str, d: int, source: CompositeSource, channel: FadingChannel,
                mu: Optional[float] = None, P: Optional[float] = None) -> StrategyConfig:
    return StrategyConfig(kind, d, build_partition(source, channel), mu, P)


# --------------------------------------------------------------------------
# Single-step selection (reference semantics for the kernels)
# --------------------------------------------------------------------------

@dataclass
class BufferState:
    """Stored measurements of the transmission buffer."""

    params: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def counts(self, J: int) -> np.ndarray:
        return np.bincount(np.asarray(self.params, dtype=np.int64), minlength=J)

    def count(self, m: int) -> int:
        return sum(1 for p in self.params if p == m)

    def add(self, m: int, value: float) -> None:
        self.params.append(int(m))
        self.values.append(float(value))

    def pop(self, m: int, rng: Optional[np.random.Generator] = None) -> float:
        idx = [i for i, p in enumerate(self.params) if p == m]
        i = idx[0] if rng is None else idx[int(rng.integers(len(idx)))]
        self.params.pop(i)
        return self.values.pop(i)

    @classmethod
    def from_counts(cls, counts) -> "BufferState":
        buf = cls()
        for m, c in enumerate(counts):
            for _ in range(int(c)):
                buf.add(m, 0.0)
        return buf


def select_measurement(config: StrategyConfig, buffer: BufferState, m: int, h: float,
                       rng: Optional[np.random.Generator] = None) -> Optional[int]:
    """Parameter to send on a channel use in set ``m`` (None: stay silent).

    The chosen measurement is removed from the buffer.
    """
    if buffer.count(m) > 0:
        pick = m
    elif config.soft and buffer.params:
        mids = config.partition.midpoints
        stored = sorted(set(buffer.params))
        pick = min(stored, key=lambda k: (abs(h - mids[k]), k))
    else:
        return None
    buffer.pop(pick, rng)
    return pick


# --------------------------------------------------------------------------
# Random draws
# --------------------------------------------------------------------------

@dataclass
class Draws:
    """Per-block arrays of shape (blocks, dbar).

    Measurement side: ``req`` (parameter), ``s`` (value), ``key`` (order of
    pick inside a parameter group).  Channel side: ``h``, ``cset`` and the
    receiver noise ``z``.
    """

    req: np.ndarray
    s: np.ndarray
    key: np.ndarray
    h: np.ndarray
    cset: np.ndarray
    z: np.ndarray

    @property
    def shape(self):
        return self.req.shape


def _requests(source: CompositeSource, u):
    cum = np.cumsum(source.request_probs)
    cum[-1] = 1.0
    return np.searchsorted(cum, u, side="right").astype(np.int64)


def draws_from_uniforms(source, channel, partition, u_req, g_s, key, u_h, u_cls, g_z) -> Draws:
    """Map raw uniforms / standard normals onto the model."""
    req = _requests(source, u_req)
    s = source.sigmas[req] * g_s
    h = np.asarray(channel.quantile(u_h), dtype=float)
    state = None
    if isinstance(channel, DiscreteChannel):
        state = channel.state_index(h)
    cset = classify_many(partition, h, u_cls, state)
    return Draws(req, s, key, h, cset, g_z)


def draws_from_rng(source, channel, partition, rng: np.random.Generator, shape) -> Draws:
    u_req = rng.random(shape)
    g_s = rng.standard_normal(shape)
    key = rng.random(shape)
    u_h = rng.random(shape) + 2.0 ** -54      # open interval, keeps |h| finite and > 0
    u_cls = rng.random(shape)
    g_z = rng.standard_normal(shape)
    return draws_from_uniforms(source, channel, partition, u_req, g_s, key, u_h, u_cls, g_z)


# --------------------------------------------------------------------------
# Block simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSimResult:
    """Per-block counters, arrays indexed [block, parameter] or [block, set]."""

    requested: np.ndarray
    transmitted: np.ndarray
    dropped: np.ndarray
    visits: np.ndarray
    power: np.ndarray          # per block, summed over the channel uses
    sq_error: np.ndarray       # per block, summed over the measurements
    dbar: int
    slot_power: Optional[np.ndarray] = None
    slot_error: Optional[np.ndarray] = None

    @property
    def n_blocks(self) -> int:
        return int(self.power.size)

    @property
    def mse(self) -> float:
        return float(self.sq_error.sum() / (self.n_blocks * self.dbar))

    @property
    def avg_power(self) -> float:
        return float(self.power.sum() / (self.n_blocks * self.dbar))


def match(config: StrategyConfig, draws: Draws) -> np.ndarray:
    """Measurement slot sent on each channel use (-1: none)."""
    nb, d = draws.shape
    J = config.partition.J
    # group by parameter, then by key (key lies in [0, 1))
    order = np.argsort(draws.req + draws.key, axis=1, kind="stable").astype(np.int64)
    counts = _per_param(draws.req, J)
    starts = np.zeros((nb, J + 1), dtype=np.int64)
    np.cumsum(counts, axis=1, out=starts[:, 1:])
    return select_slots(np.ascontiguousarray(order), starts,
                        np.ascontiguousarray(draws.cset, dtype=np.int64),
                        np.ascontiguousarray(draws.h, dtype=float),
                        np.ascontiguousarray(config.partition.midpoints, dtype=float),
                        bool(config.soft))


def _per_param(idx: np.ndarray, J: int, mask=None) -> np.ndarray:
    nb, d = idx.shape
    flat = (np.arange(nb)[:, None] * J + idx)
    w = None if mask is None else mask.ravel().astype(float)
    return np.bincount(flat.ravel(), weights=w, minlength=nb * J).reshape(nb, J).astype(np.int64)


def simulate(config: StrategyConfig, source: CompositeSource, draws: Draws,
             noise: bool = False, keep_slots: bool = False) -> BlockSimResult:
    """Run the blocks in ``draws`` under the calibrated ``config``."""
    if config.mu is None:
        raise ValueError("configuration is not calibrated")
    nb, d = draws.shape
    if d != config.dbar:
        raise ValueError("draw shape does not match the buffer depth")
    J = source.J
    src = match(config, draws)
    sent = src >= 0
    rows = np.arange(nb)[:, None]
    idx = np.where(sent, src, 0)
    m_tx = draws.req[rows, idx]
    var = source.variances[m_tx]
    sig = source.sigmas[m_tx]
    h = draws.h
    pw = np.where(sent, np.maximum(config.mu * sig / h - 1.0 / (h * h), 0.0), 0.0)

    # error per measurement slot; untransmitted ones are estimated as 0
    done = np.zeros((nb, d), dtype=bool)
    done[np.broadcast_to(rows, (nb, d))[sent], src[sent]] = True
    if noise:
        s = draws.s[rows, idx]
        f = np.sqrt(pw / var)
        y = h * f * s + draws.z
        err_tx = (s - mmse_gain(f, h, var) * y) ** 2
        err = draws.s ** 2
    else:
        err_tx = var / (h * h * pw + 1.0)
        err = source.variances[draws.req].astype(float)
    err = err.copy()
    err[np.broadcast_to(rows, (nb, d))[sent], src[sent]] = err_tx[sent]

    requested = _per_param(draws.req, J)
    transmitted = _per_param(m_tx, J, sent)
    res = BlockSimResult(
        requested=requested, transmitted=transmitted, dropped=requested - transmitted,
        visits=_per_param(draws.cset, J), power=pw.sum(axis=1), sq_error=err.sum(axis=1),
        dbar=d, slot_power=pw if keep_slots else None, slot_error=err if keep_slots else None)
    return res


def run_block(config: StrategyConfig, source: CompositeSource, channel: FadingChannel,
              rng: np.random.Generator, noise: bool = False) -> BlockSimResult:
    """Collect one block of measurements and send it over the next dbar uses."""
    draws = draws_from_rng(source, channel, config.partition, rng, (1, config.dbar))
    return simulate(config, source, draws, noise=noise)


def transmitted_cells(config: StrategyConfig, source: CompositeSource, draws: Draws):
    """(|h|, sigma) of every channel use that carries a measurement."""
    src = match(config, draws)
    sent = src >= 0
    rows = np.arange(draws.shape[0])[:, None]
    m_tx = draws.req[rows, np.where(sent, src, 0)]
    return draws.h[sent], source.sigmas[m_tx[sent]]


def mu_for_power(h: np.ndarray, sigma: np.ndarray, n_uses: int, P: float) -> float:
    """mu whose power rule spends P per channel use on the recorded cells.

    The spend sum_i [mu sigma_i/h_i - 1/h_i^2]^+ / n is piecewise linear in
    mu with a kink at 1/(h_i sigma_i), so sorting the kinks and taking
    prefix sums gives the root exactly.
    """
    if P <= 0:
        return 0.0
    if h.size == 0:
        raise CalibrationFailure("no transmissions recorded; target power unreachable")
    h = np.asarray(h, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    kink = 1.0 / (h * sigma)
    order = np.argsort(kink, kind="stable")
    kink = kink[order]
    R = np.cumsum((sigma / h)[order])
    inv = np.cumsum((1.0 / (h * h))[order])
    # with the first k+1 cells active: mu = (n P + I_k) / R_k, valid if it
    # lies between kink k and kink k+1
    cand = (n_uses * P + inv) / R
    upper = np.append(kink[1:], np.inf)
    ok = np.flatnonzero((cand >= kink) & (cand <= upper))
    if ok.size == 0 or not np.isfinite(cand[ok[0]]):
        raise CalibrationFailure("power equation has no root on the recorded cells")
    return float(cand[ok[0]])


def calibrate_mu(config: StrategyConfig, source: CompositeSource, P: float,
                 draws: Draws) -> float:
    """Calibrate mu on a fixed batch of draws.

    Matching never looks at mu, so the batch is matched once and the
    measured average power is an explicit increasing function of mu.
    """
    if P <= 0:
        raise ValueError("target power must be positive")
    h, sig = transmitted_cells(config, source, draws)
    mu = mu_for_power(h, sig, draws.req.size, P)
    got = float(np.maximum(mu * sig / h - 1.0 / (h * h), 0.0).sum() / draws.req.size)
    if abs(got - P) > CALIBRATION_RTOL * P:
        raise CalibrationFailure(f"calibrated power {got!r} misses target {P!r}")
    return mu


# --------------------------------------------------------------------------
# Bookkeeping helpers
# --------------------------------------------------------------------------

def lthm_drop_floor(source: CompositeSource, dbar: int) -> float:
    """Per-measurement distortion of the untransmitted LTHM measurements.

    sum_m E[(Zbar_m - Zhat_m)^+] sigma_m^2 / dbar with request and set
    sequences enumerated exhaustively (set m has probability p_M(m)).
    """
    J = source.J
    p = source.request_probs
    seqs = list(itertools.product(range(J), repeat=dbar))
    counts = np.array([np.bincount(s, minlength=J) for s in seqs])
    prob = np.array([np.prod(p[list(s)]) for s in seqs])
    # requests and channel sets are independent with the same law
    excess = np.maximum(counts[:, None, :] - counts[None, :, :], 0)
    e = np.einsum("a,b,abj->j", prob, prob, excess)
    return float(e @ source.variances / dbar)


@dataclass(frozen=True)
class AsymptoticMatchedResult:
    q: float
    mu: float
    power: float
    distortion: float


MATCH_TOL = 1e-9


def asymptotic_matched(source: CompositeSource, channel: DiscreteChannel,
                       P: float) -> AsymptoticMatchedResult:
    """Large-buffer limits of LTHM/LTSM when sigma_m/|h_m| is constant and
    state probabilities equal the request probabilities."""
    if not isinstance(channel, DiscreteChannel):
        raise ValueError("matching needs a discrete channel")
    if channel.n_states != source.J:
        raise ValueError("matching needs one channel state per parameter")
    ratios = source.sigmas / channel.magnitudes
    q = float(ratios[0])
    for m in range(source.J):
        if abs(ratios[m] - q) > MATCH_TOL:
            raise ValueError(f"parameter {m}: sigma/|h| = {ratios[m]!r} differs from {q!r}")
        if abs(source.request_probs[m] - channel.probs[m]) > MATCH_TOL:
            raise ValueError(f"parameter {m}: request and state probabilities differ")
    hh = channel.magnitudes ** 2
    p = source.request_probs

    def power(x):              # x = mu q
        return float(p @ np.maximum(x - 1.0 / hh, 0.0))

    if P == 0:
        x = 0.0
    else:
        x = bisect_multiplier(power, P, upper=float(np.max(1.0 / hh)), what="mu q").value
    pw = np.maximum(x - 1.0 / hh, 0.0)
    dist = float(p @ (source.variances / (hh * pw + 1.0)))
    return AsymptoticMatchedResult(q, x / q, power(x), dist)
