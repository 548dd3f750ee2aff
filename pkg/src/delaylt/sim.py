"""Monte Carlo harness: seeded streams, calibrated runs, sweeps and CSV output.

Random draws are indexed by a global slot counter and generated in fixed
chunks, each chunk from its own ``SeedSequence((seed, role, chunk))``.
Every strategy, delay and power therefore sees the same requests,
measurements and channel realisations (common random numbers), and
calibration uses a disjoint role.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import CompositeSource, FadingChannel, build_partition
from .strategies import (CalibrationFailure, Draws, StrategyConfig, buffer_depth,
                         draws_from_uniforms, mu_for_power, simulate, transmitted_cells)
from .waterfill import NumericalFailure, strict_delay_optimal

log = logging.getLogger(__name__)

CHUNK = 1 << 16
BATCH_SLOTS = 1 << 20
N_BATCHES = 50
MIN_BATCHES = 30
Z95 = 1.959963984540054
ROLE_EVAL, ROLE_CAL = 0, 1
CAL_SLOTS = 200_000
CAL_FACTOR = 4            # calibration slots per evaluation slot
CAL_MAX = 1 << 23
KINDS = ("strict", "LTHM", "LTSM")
MODES = ("analytic", "noise")
CSV_COLUMNS = ("strategy", "d", "power_db", "mse", "mse_ci95", "avg_power", "mu", "blocks", "seed")


class ValidationFailure(RuntimeError):
    """Two estimators of the same quantity disagree."""


def db_to_linear(db: float) -> float:
    return 0.0 if db == -math.inf else 10.0 ** (db / 10.0)


def linear_to_db(P: float) -> float:
    return -math.inf if P == 0 else 10.0 * math.log10(P)


# --------------------------------------------------------------------------
# Streams
# --------------------------------------------------------------------------

class SlotStream:
    """Raw uniforms / normals for any range of global slot indices."""

    def __init__(self, seed: int, role: int = ROLE_EVAL):
        self.seed = int(seed)
        self.role = int(role)

    def _chunk(self, k: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, self.role, k)))
        out = np.empty((6, CHUNK))
        out[0] = rng.random(CHUNK)                    # request
        out[1] = rng.standard_normal(CHUNK)           # measurement
        out[2] = rng.random(CHUNK)                    # pick key
        out[3] = rng.random(CHUNK) + 2.0 ** -54       # channel, open interval
        out[4] = rng.random(CHUNK)                    # virtual-state split
        out[5] = rng.standard_normal(CHUNK)           # receiver noise
        return out

    def raw(self, start: int, stop: int) -> np.ndarray:
        k0, k1 = start // CHUNK, (stop - 1) // CHUNK
        parts = [self._chunk(k) for k in range(k0, k1 + 1)]
        buf = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        off = start - k0 * CHUNK
        return buf[:, off:off + (stop - start)]

    def draws(self, source, channel, partition, block0: int, n_blocks: int, dbar: int) -> Draws:
        r = self.raw(block0 * dbar, (block0 + n_blocks) * dbar).reshape(6, n_blocks, dbar)
        return draws_from_uniforms(source, channel, partition, *r)


# --------------------------------------------------------------------------
# Estimates
# --------------------------------------------------------------------------

def batch_means_ci(values: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float, bool]:
    """(mean, 95% half-width, reliable) from contiguous batch means."""
    values = np.asarray(values, dtype=float)
    B = min(n_batches, values.size)
    mean = float(values.mean()) if values.size else math.nan
    if B < 2:
        return mean, math.inf, False
    means = np.array([b.mean() for b in np.array_split(values, B)])
    half = Z95 * float(means.std(ddof=1)) / math.sqrt(B)
    return mean, half, B >= MIN_BATCHES


@dataclass(frozen=True)
class PointSpec:
    kind: str
    d: int
    power_db: float
    blocks: int
    seed: int = 0
    mode: str = "analytic"
    cal_slots: int = CAL_SLOTS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.kind == "strict" and self.d != 1:
            raise ValueError("the strict-delay rule needs d = 1")

    @property
    def P(self) -> float:
        return db_to_linear(self.power_db)


@dataclass(frozen=True)
class EstimatePoint:
    strategy: str
    d: int
    power_db: float
    mse: float
    mse_ci95: float
    avg_power: float
    power_ci95: float
    mu: float
    blocks: int
    seed: int
    mode: str = "analytic"
    reliable: bool = True
    failed: Optional[str] = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


def strict_delay_trajectory(source: CompositeSource, lam: float, draws: Draws,
                            noise: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot (power, squared error) of the strict-delay rule at multiplier lam."""
    m = draws.req
    var = source.variances[m]
    sig = source.sigmas[m]
    h = draws.h
    pw = np.maximum(lam * sig / h - 1.0 / (h * h), 0.0)
    if noise:
        f = np.sqrt(pw / var)
        y = h * f * draws.s + draws.z
        g = h * f * var / (h * h * f * f * var + 1.0)
        return pw, (draws.s - g * y) ** 2
    return pw, var / (h * h * pw + 1.0)


def _calibrate(spec: PointSpec, source, channel, partition) -> float:
    """mu for the point; the calibration sample grows with the run so its
    error stays below the evaluation confidence interval."""
    P = spec.P
    if P == 0:
        return 0.0
    if spec.kind == "strict":
        return strict_delay_optimal(source, channel, P).lam
    dbar = buffer_depth(spec.d)
    slots = min(max(spec.cal_slots, CAL_FACTOR * spec.blocks * dbar), max(spec.cal_slots, CAL_MAX))
    n_cal = max(1, -(-slots // dbar))
    cfg = StrategyConfig(spec.kind, spec.d, partition)
    stream = SlotStream(spec.seed, ROLE_CAL)
    per_batch = max(1, BATCH_SLOTS // dbar)
    hs, sigs = [], []
    for b0 in range(0, n_cal, per_batch):
        nb = min(per_batch, n_cal - b0)
        h, sig = transmitted_cells(cfg, source, stream.draws(source, channel, partition, b0, nb, dbar))
        hs.append(h)
        sigs.append(sig)
    return mu_for_power(np.concatenate(hs), np.concatenate(sigs), n_cal * dbar, P)


def run_point(spec: PointSpec, source: CompositeSource, channel: FadingChannel,
              partition=None, mu: Optional[float] = None) -> EstimatePoint:
    """Calibrate (unless ``mu`` is given) and simulate one grid point."""
    partition = partition or build_partition(source, channel)
    if mu is None:
        mu = _calibrate(spec, source, channel, partition)
    dbar = 1 if spec.kind == "strict" else buffer_depth(spec.d)
    noise = spec.mode == "noise"
    stream = SlotStream(spec.seed, ROLE_EVAL)
    per_batch = max(1, BATCH_SLOTS // dbar)
    err = np.empty(spec.blocks)
    pw = np.empty(spec.blocks)
    cfg = None if spec.kind == "strict" else StrategyConfig(spec.kind, spec.d, partition, mu)
    for b0 in range(0, spec.blocks, per_batch):
        nb = min(per_batch, spec.blocks - b0)
        dr = stream.draws(source, channel, partition, b0, nb, dbar)
        if cfg is None:
            p, e = strict_delay_trajectory(source, mu, dr, noise)
            pw[b0:b0 + nb], err[b0:b0 + nb] = p[:, 0], e[:, 0]
        else:
            r = simulate(cfg, source, dr, noise=noise)
            pw[b0:b0 + nb], err[b0:b0 + nb] = r.power / dbar, r.sq_error / dbar
    mse, ci, ok = batch_means_ci(err)
    p_hat, p_ci, _ = batch_means_ci(pw)
    return EstimatePoint(spec.kind, spec.d, spec.power_db, mse, ci, p_hat, p_ci, float(mu),
                         spec.blocks, spec.seed, spec.mode, ok)


@dataclass(frozen=True)
class SweepSpec:
    kinds: Sequence[str]
    delays: Sequence[int]
    powers_db: Sequence[float]
    blocks: int
    seed: int = 0
    mode: str = "analytic"

    def __post_init__(self):
        if not self.kinds or not self.delays or not self.powers_db:
            raise ValueError("sweep grids must be non-empty")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")

    def points(self) -> list[PointSpec]:
        out = []
        for kind in self.kinds:
            delays = [1] if kind == "strict" else self.delays
            for d in delays:
                for p in self.powers_db:
                    out.append(PointSpec(kind, int(d), float(p), self.blocks, self.seed, self.mode))
        return out


def run_sweep(spec: SweepSpec, source: CompositeSource, channel: FadingChannel) -> list[EstimatePoint]:
    """All grid points in order; a failing point is reported, not raised."""
    partition = build_partition(source, channel)
    out = []
    for pt in spec.points():
        try:
            out.append(run_point(pt, source, channel, partition))
        except (CalibrationFailure, NumericalFailure) as exc:
            log.warning("point %s d=%d %.1f dB failed: %s", pt.kind, pt.d, pt.power_db, exc)
            out.append(EstimatePoint(pt.kind, pt.d, pt.power_db, math.nan, math.nan, math.nan,
                                     math.nan, math.nan, pt.blocks, pt.seed, pt.mode, False, str(exc)))
    return out


def compare_modes(spec: PointSpec, source: CompositeSource, channel: FadingChannel,
                  check: bool = False, n_ci: float = 4.0):
    """(analytic estimate, noise-sampled estimate, agree) on shared streams."""
    partition = build_partition(source, channel)
    a = run_point(PointSpec(**{**asdict(spec), "mode": "analytic"}), source, channel, partition)
    b = run_point(PointSpec(**{**asdict(spec), "mode": "noise"}), source, channel, partition, mu=a.mu)
    tol = n_ci * math.hypot(a.mse_ci95, b.mse_ci95)
    agree = abs(a.mse - b.mse) <= tol
    if check and not agree:
        raise ValidationFailure(f"estimators differ: {a.mse!r} vs {b.mse!r} (tolerance {tol!r})")
    return a, b, agree


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(points: Iterable[EstimatePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in points:
        w.writerow([_fmt(p.row()[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return rows
