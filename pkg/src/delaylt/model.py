"""Composite Gaussian source, fading-channel laws and the channel partition.

Parameter and set indices are 0-based throughout the package: parameter 0
has the largest variance and set 0 collects the strongest channel states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .quadrature import PanelRule, default_rule, integrate_unit

PROB_TOL = 1e-12


class ConfigError(ValueError):
    """Raised for malformed model or run configuration."""


def _check_probs(probs: np.ndarray, what: str) -> None:
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError(f"{what} must be a non-empty vector")
    if np.any(probs < 0) or abs(float(np.sum(probs)) - 1.0) > PROB_TOL:
        raise ValueError(f"{what} must be non-negative and sum to 1 (got {np.sum(probs)!r})")


@dataclass(frozen=True)
class CompositeSource:
    """J independent zero-mean Gaussian parameters with request probabilities.

    Components are re-ordered on construction so that variances are stored in
    non-increasing order.
    """

    variances: np.ndarray
    request_probs: np.ndarray

    def __post_init__(self):
        var = np.asarray(self.variances, dtype=float).ravel()
        probs = np.asarray(self.request_probs, dtype=float).ravel()
        if var.shape != probs.shape:
            raise ValueError("variances and request_probs must have equal length")
        if var.size == 0 or np.any(~np.isfinite(var)) or np.any(var <= 0):
            raise ValueError("variances must be finite and positive")
        _check_probs(probs, "request_probs")
        order = np.argsort(-var, kind="stable")
        object.__setattr__(self, "variances", var[order])
        object.__setattr__(self, "request_probs", probs[order])

    @property
    def J(self) -> int:
        return int(self.variances.size)

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @property
    def mean_variance(self) -> float:
        """Prior distortion E[sigma_m^2], reached with zero power."""
        return float(np.dot(self.request_probs, self.variances))


@dataclass(frozen=True)
class DiscreteChannel:
    """Finitely many positive magnitudes, stored in descending order."""

    magnitudes: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if mags.shape != probs.shape:
            raise ValueError("magnitudes and probs must have equal length")
        if mags.size == 0 or np.any(~np.isfinite(mags)) or np.any(mags <= 0):
            raise ValueError("channel magnitudes must be finite and positive")
        _check_probs(probs, "channel probs")
        order = np.argsort(-mags, kind="stable")
        mags, probs = mags[order], probs[order]
        if np.any(np.diff(mags) >= 0):
            raise ValueError("channel magnitudes must be distinct")
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "probs", probs)

    kind = "discrete"

    @property
    def n_states(self) -> int:
        return int(self.magnitudes.size)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.probs * (self.magnitudes <= x[..., None]), axis=-1)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.probs * (self.magnitudes > x[..., None]), axis=-1)

    def quantile(self, u):
        """Generalised inverse: smallest magnitude with F(h) >= u."""
        u = np.asarray(u, dtype=float)
        asc = self.magnitudes[::-1]
        cum = np.cumsum(self.probs[::-1])
        idx = np.searchsorted(cum, u - PROB_TOL, side="left")
        return asc[np.minimum(idx, asc.size - 1)]

    def mean_square(self) -> float:
        return float(np.dot(self.probs, self.magnitudes ** 2))

    def sample_states(self, rng: np.random.Generator, size) -> np.ndarray:
        """State indices (into the descending magnitude table)."""
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        return np.searchsorted(cum, rng.random(size), side="right")

    def sample(self, rng: np.random.Generator, size=None):
        idx = self.sample_states(rng, size)
        return self.magnitudes[idx]

    def state_index(self, h) -> np.ndarray:
        """Map magnitudes back to state indices; raises for unknown values."""
        h = np.asarray(h, dtype=float)
        asc = self.magnitudes[::-1]
        pos = np.searchsorted(asc, h)
        pos = np.minimum(pos, asc.size - 1)
        if np.any(asc[pos] != h):
            raise ValueError("magnitude is not a state of this channel")
        return asc.size - 1 - pos

    def law(self) -> "DiscreteLaw":
        return DiscreteLaw(self.magnitudes, self.probs)


@dataclass(frozen=True)
class RayleighChannel:
    """Rayleigh magnitude law with scale omega: F(x) = 1 - exp(-x^2 / (2 omega^2))."""

    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError("Rayleigh scale must be positive")

    kind = "rayleigh"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return -np.expm1(-(x * x) / (2.0 * self.scale ** 2))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-(x * x) / (2.0 * self.scale ** 2))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        w2 = self.scale ** 2
        return np.where(x >= 0, x / w2 * np.exp(-(x * x) / (2.0 * w2)), 0.0)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.scale * np.sqrt(-2.0 * np.log1p(-u))

    def isf(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return self.scale * np.sqrt(-2.0 * np.log(s))

    def from_unit(self, u, s):
        """Magnitude at probability level u, using whichever of u, 1-u is accurate."""
        u = np.asarray(u, dtype=float)
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s < 0.5, self.isf(np.maximum(s, 0.0)),
                            self.quantile(np.minimum(u, 0.5)))

    def mean_square(self) -> float:
        return 2.0 * self.scale ** 2

    def sample(self, rng: np.random.Generator, size=None):
        return rng.rayleigh(self.scale, size)

    def law(self) -> "QuadratureLaw":
        return QuadratureLaw(self)


FadingChannel = Union[DiscreteChannel, RayleighChannel]


# --------------------------------------------------------------------------
# Expectation helpers over channel magnitude
# --------------------------------------------------------------------------

class DiscreteLaw:
    """A finite (possibly unnormalised) measure over magnitudes."""

    def __init__(self, values, weights):
        self.values = np.asarray(values, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def expect(self, g: Callable[[np.ndarray], np.ndarray], kinks: Iterable[float] = ()) -> float:
        return float(np.dot(self.weights, g(self.values)))

    def scaled(self, c: float) -> "DiscreteLaw":
        return DiscreteLaw(self.values, self.weights * c)


_NODE_CACHE: dict = {}


def _node_magnitudes(channel: RayleighChannel, rule: PanelRule) -> np.ndarray:
    key = (id(rule), channel.scale)
    if key not in _NODE_CACHE:
        _NODE_CACHE[key] = channel.from_unit(rule.u, rule.s)
    return _NODE_CACHE[key]


class QuadratureLaw:
    """A continuous measure ``weight(u) du`` pushed through the channel quantile.

    ``weight`` is a density on the probability scale; ``None`` means the base
    channel law itself.  The weight may be unnormalised (mixtures over ranks).
    """

    def __init__(self, channel: RayleighChannel,
                 weight: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
                 scale: float = 1.0, rule: Optional[PanelRule] = None,
                 node_weights: Optional[np.ndarray] = None,
                 unit_kinks: Iterable[tuple[float, float]] = ()):
        self.channel = channel
        self.unit_kinks = list(unit_kinks)
        self.weight = weight
        self.scale = scale
        self.rule = rule or default_rule()
        self._h = _node_magnitudes(channel, self.rule)
        if node_weights is not None:
            self._wt = scale * node_weights
        else:
            self._wt = self._weight(self.rule.u, self.rule.s)

    def _weight(self, u, s):
        if self.weight is None:
            return self.scale * np.ones_like(u)
        return self.scale * self.weight(u, s)

    @property
    def mass(self) -> float:
        return self.expect(lambda h: np.ones_like(h))

    def expect(self, g: Callable[[np.ndarray], np.ndarray], kinks: Iterable[float] = ()) -> float:
        base = self

        def f(u, s):
            if u is base.rule.u:
                return g(base._h) * base._wt
            return g(base.channel.from_unit(u, s)) * base._weight(u, s)

        ks = [(float(self.channel.cdf(k)), float(self.channel.sf(k)))
              for k in kinks if np.isfinite(k) and k > 0]
        return integrate_unit(f, ks + self.unit_kinks, self.rule)

    def scaled(self, c: float) -> "QuadratureLaw":
        out = QuadratureLaw.__new__(QuadratureLaw)
        out.channel, out.weight, out.rule = self.channel, self.weight, self.rule
        out.unit_kinks = self.unit_kinks
        out.scale = self.scale * c
        out._h = self._h
        out._wt = self._wt * c
        return out


MagnitudeLaw = Union[DiscreteLaw, QuadratureLaw]


# --------------------------------------------------------------------------
# Channel partition for hard/soft matching
# --------------------------------------------------------------------------

_SPLIT_EPS = 1e-12


@dataclass(frozen=True)
class ChannelPartition:
    """Channel sets H_m matched to parameters, with soft-matching midpoints.

    ``boundaries`` has J+1 entries from +inf down to 0.  For discrete
    channels ``virtual`` is a (states x J) table of conditional set
    probabilities given the real state; it is ``None`` for continuous laws.
    """

    boundaries: np.ndarray
    midpoints: np.ndarray
    virtual: Optional[np.ndarray] = None
    magnitudes: Optional[np.ndarray] = None

    @property
    def J(self) -> int:
        return int(self.midpoints.size)

    def set_masses(self, channel: FadingChannel) -> np.ndarray:
        if self.virtual is not None:
            return channel.probs @ self.virtual
        return np.diff(channel.sf(self.boundaries))


def _greedy_split(state_probs: np.ndarray, set_probs: np.ndarray) -> np.ndarray:
    """Fill sets in order from states scanned in descending magnitude."""
    K, J = state_probs.size, set_probs.size
    alloc = np.zeros((K, J))
    need = set_probs.astype(float).copy()
    j = 0
    for k in range(K):
        left = float(state_probs[k])
        while left > _SPLIT_EPS and j < J:
            take = min(left, need[j])
            alloc[k, j] += take
            left -= take
            need[j] -= take
            if need[j] <= _SPLIT_EPS:
                j += 1
        if left > _SPLIT_EPS:
            # rounding residue goes to the last set
            alloc[k, J - 1] += left
    cond = alloc / state_probs[:, None]
    cond[cond < _SPLIT_EPS] = 0.0
    return cond / cond.sum(axis=1, keepdims=True)


def build_partition(source: CompositeSource, channel: FadingChannel) -> ChannelPartition:
    """Construct the sets H_m with Pr{|h| in H_m} = p_M(m)."""
    cum = np.cumsum(source.request_probs)
    cum[-1] = 1.0
    J = source.J
    if isinstance(channel, RayleighChannel):
        upper_tail = np.concatenate([[0.0], cum])          # sf at each boundary
        upper_tail[-1] = 1.0
        bounds = channel.isf(upper_tail)
        bounds[0] = np.inf
        bounds[-1] = 0.0
        mid_tail = (upper_tail[:-1] + upper_tail[1:]) / 2.0
        mids = channel.isf(mid_tail)
        return ChannelPartition(boundaries=bounds, midpoints=mids)

    cond = _greedy_split(channel.probs, source.request_probs)
    mids = np.array([channel.magnitudes[cond[:, j] > 0].mean() if np.any(cond[:, j] > 0)
                     else np.nan for j in range(J)])
    bounds = np.empty(J + 1)
    bounds[0] = np.inf
    bounds[-1] = 0.0
    if J > 1:
        bounds[1:-1] = channel.quantile(1.0 - cum[:-1])
    return ChannelPartition(boundaries=bounds, midpoints=mids, virtual=cond,
                            magnitudes=channel.magnitudes.copy())


def classify_many(partition: ChannelPartition, h: np.ndarray,
                  u: Optional[np.ndarray] = None,
                  state: Optional[np.ndarray] = None) -> np.ndarray:
    """Vectorised set lookup.

    Continuous: set m holds ``H'_m <= |h| < H'_{m-1}``.  Discrete: the state's
    conditional row is sampled with the uniforms ``u``.
    """
    h = np.asarray(h, dtype=float)
    if partition.virtual is None:
        inner = partition.boundaries[1:-1]
        # number of interior boundaries strictly above h
        return np.sum(inner[None, :] > h.reshape(-1, 1), axis=1).reshape(h.shape).astype(np.int64)
    if state is None:
        asc = partition.magnitudes[::-1]
        pos = np.minimum(np.searchsorted(asc, h), asc.size - 1)
        state = asc.size - 1 - pos
    cum = np.cumsum(partition.virtual, axis=1)
    cum[:, -1] = 1.0
    if u is None:
        raise ValueError("discrete classification needs uniforms for virtual states")
    rows = cum[np.asarray(state)]
    return np.sum(rows <= np.asarray(u)[..., None], axis=-1).astype(np.int64)


def classify(partition: ChannelPartition, h: float,
             rng: Optional[np.random.Generator] = None) -> int:
    """Set index of one channel magnitude."""
    if h < 0:
        raise ValueError("magnitude must be non-negative")
    u = None
    if partition.virtual is not None:
        if rng is None:
            raise ValueError("a random stream is required for discrete channels")
        u = np.array([rng.random()])
    return int(classify_many(partition, np.array([h]), u)[0])


def sample_step(source: CompositeSource, channel: FadingChannel,
                rng: np.random.Generator) -> tuple[int, float, float]:
    """Draw one (request index, measurement, channel magnitude) triple."""
    cum = np.cumsum(source.request_probs)
    cum[-1] = 1.0
    m = int(np.searchsorted(cum, rng.random(), side="right"))
    s = float(rng.normal(0.0, source.sigmas[m]))
    h = float(channel.sample(rng))
    return m, s, h


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

_MODEL_KEYS = {"variances", "request_probs", "channel"}
_CHANNEL_KEYS = {"kind", "states", "scale"}


def model_from_config(cfg: Mapping[str, Any]) -> tuple[CompositeSource, FadingChannel]:
    """Build (source, channel) from a parsed config mapping.

    Discrete ``channel.states`` is a list of ``[magnitude, probability]``.
    """
    unknown = set(cfg) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    try:
        source = CompositeSource(cfg["variances"], cfg["request_probs"])
        ch = cfg["channel"]
        bad = set(ch) - _CHANNEL_KEYS
        if bad:
            raise ConfigError(f"unknown channel keys: {sorted(bad)}")
        kind = ch["kind"]
        if kind == "rayleigh":
            channel: FadingChannel = RayleighChannel(float(ch["scale"]))
        elif kind == "discrete":
            states = np.asarray(ch["states"], dtype=float)
            if states.ndim != 2 or states.shape[1] != 2:
                raise ConfigError("channel.states must be a list of [magnitude, probability]")
            channel = DiscreteChannel(states[:, 0], states[:, 1])
        else:
            raise ConfigError(f"unknown channel kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return source, channel


# Reference setups used by the figure presets and the tests.

REFERENCE_VARIANCES = (10.0, 5.0, 1.0, 0.5)
REFERENCE_PROBS = (0.1, 0.3, 0.4, 0.2)


def reference_source() -> CompositeSource:
    return CompositeSource(REFERENCE_VARIANCES, REFERENCE_PROBS)


def reference_discrete_channel() -> DiscreteChannel:
    return DiscreteChannel(np.sqrt(REFERENCE_VARIANCES), REFERENCE_PROBS)


def reference_rayleigh_channel() -> RayleighChannel:
    return RayleighChannel(3.0)
