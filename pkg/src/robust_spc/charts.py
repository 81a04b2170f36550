"""Step-driven control chart state machines.

Every chart consumes one standardized subgroup statistic per inspection
(``u = raw / statistic_sigma(kind, n)``).  A step takes ``(config, state, u)``
and returns a :class:`StepOutcome` holding the signal flag, the new state and
a trace record.  The same functions accept scalars or equally shaped numpy
arrays, which is how the simulation engine advances thousands of
replications at once.

Families
--------
shewhart_{mean,median}   memoryless limits (LCL, UCL)
cusum_{mean,median}      two-sided CUSUM with reference mu0 +/- delta0
ewma_{mean,median}       EWMA with asymptotic-variance limits
sparks_acusum            CUSUM with an EWMA-tracked reference and h(delta) scaling
aewma                    adaptive EWMA with a Huber score weight
zone_classic             zone scores (0, 1, 2, 4, 8) accumulated on one side of CL
adaptive_zone            Shewhart limits shrunk toward CL after same-side points
ad_cusum_{median,mean}   CUSUM whose decision limit shrinks while the statistic
                         sits in its upper zones
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace, asdict
import math
from typing import Any, ClassVar

import numpy as np

from .stats import KINDS


class ConfigError(ValueError):
    """Invalid chart design parameters."""


ZONE_SCORES = (0, 1, 2, 4, 8)


@dataclass
class StepOutcome:
    signal: Any
    state_after: Any
    trace: dict


def _check_input(u) -> None:
    if not np.all(np.isfinite(u)):
        raise ValueError(f"chart input must be finite, got {u!r}")


def _check_statistic(statistic: str) -> None:
    if statistic not in KINDS:
        raise ConfigError(f"statistic must be one of {KINDS}, got {statistic!r}")


def _positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be positive, got {value}")


# --------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class ShewhartConfig:
    statistic: str = "mean"
    lcl: float = -3.09
    ucl: float = 3.09
    center: float = 0.0

    limit_parameter: ClassVar[str] = "limit"

    def __post_init__(self):
        _check_statistic(self.statistic)
        if not self.lcl < self.center < self.ucl:
            raise ConfigError(
                f"Shewhart limits need LCL < CL < UCL, got {self.lcl}, {self.center}, {self.ucl}"
            )

    @property
    def family(self) -> str:
        return f"shewhart_{self.statistic}"


@dataclass(frozen=True)
class CusumConfig:
    """Two-sided (or upper one-sided) CUSUM.

    ``input_scale`` multiplies the standardized input before accumulation;
    setting it to ``statistic_sigma(statistic, n)`` runs the chart in
    observation units so ``delta0`` and ``limit`` keep their printed meaning.
    """

    statistic: str = "mean"
    delta0: float = 0.15
    limit: float = 4.0
    mu0: float = 0.0
    input_scale: float = 1.0
    sides: str = "two"

    limit_parameter: ClassVar[str] = "limit"

    def __post_init__(self):
        _check_statistic(self.statistic)
        _positive("delta0", self.delta0)
        _positive("limit", self.limit)
        _positive("input_scale", self.input_scale)
        if self.sides not in ("two", "upper"):
            raise ConfigError(f"sides must be 'two' or 'upper', got {self.sides!r}")

    @property
    def family(self) -> str:
        return f"cusum_{self.statistic}"


@dataclass(frozen=True)
class EwmaConfig:
    statistic: str = "mean"
    lam: float = 0.1
    limit: float = 2.835
    mu0: float = 0.0

    limit_parameter: ClassVar[str] = "limit"

    def __post_init__(self):
        _check_statistic(self.statistic)
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"lam must lie in (0, 1], got {self.lam}")
        _positive("limit", self.limit)

    @property
    def family(self) -> str:
        return f"ewma_{self.statistic}"

    @property
    def threshold(self) -> float:
        return self.limit * math.sqrt(self.lam / (2.0 - self.lam))


@dataclass(frozen=True)
class SparksConfig:
    """Adaptive-reference CUSUM; ``h_grid``/``h_values`` tabulate h(delta)."""

    statistic: str = "mean"
    w: float = 0.1
    delta_min: float = 0.5
    h_grid: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    h_values: tuple = (9.0, 5.0, 3.4, 2.5, 2.0, 1.6)
    limit: float = 1.0

    limit_parameter: ClassVar[str] = "limit"

    def __post_init__(self):
        _check_statistic(self.statistic)
        if not 0.0 < self.w <= 1.0:
            raise ConfigError(f"w must lie in (0, 1], got {self.w}")
        _positive("delta_min", self.delta_min)
        _positive("limit", self.limit)
        grid = tuple(float(g) for g in self.h_grid)
        values = tuple(float(v) for v in self.h_values)
        object.__setattr__(self, "h_grid", grid)
        object.__setattr__(self, "h_values", values)
        if not grid or len(grid) != len(values):
            raise ConfigError("h_grid and h_values must be non-empty and equally long")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("h_grid must be strictly increasing")
        if any(not v > 0 for v in values):
            raise ConfigError("h_values must be positive")

    @property
    def family(self) -> str:
        return "sparks_acusum"

    def h(self, delta):
        return np.interp(delta, self.h_grid, self.h_values)


@dataclass(frozen=True)
class AewmaConfig:
    """Adaptive EWMA with Huber score; ``limit`` is in units of the statistic."""

    statistic: str = "mean"
    lam: float = 0.1
    huber_k: float = 3.0
    limit: float = 0.688
    mu0: float = 0.0

    limit_parameter: ClassVar[str] = "huber_k"

    def __post_init__(self):
        _check_statistic(self.statistic)
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"lam must lie in (0, 1], got {self.lam}")
        _positive("huber_k", self.huber_k)
        _positive("limit", self.limit)

    @property
    def family(self) -> str:
        return "aewma"


@dataclass(frozen=True)
class ZoneConfig:
    statistic: str = "mean"
    zone_limits: tuple = (1.0, 2.0, 3.0, 4.0)
    scores: tuple = ZONE_SCORES
    threshold: float = 8.0

    limit_parameter: ClassVar[str | None] = None

    def __post_init__(self):
        _check_statistic(self.statistic)
        object.__setattr__(self, "zone_limits", tuple(float(k) for k in self.zone_limits))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        _check_zone_limits(self.zone_limits, 4)
        if len(self.scores) != 5:
            raise ConfigError("scores needs one entry per zone Z0..Z4")
        _positive("threshold", self.threshold)

    @property
    def family(self) -> str:
        return "zone_classic"


@dataclass(frozen=True)
class AdaptiveZoneConfig:
    """Shewhart limits (-limit, +limit) shrunk by ``shrinkage[k]`` in zone k."""

    statistic: str = "mean"
    limit: float = 3.09
    zone_limits: tuple = (1.0, 2.0, 3.0, 4.0)
    shrinkage: tuple = (0.0, 0.1, 0.2, 0.4, 0.8)
    min_halfwidth: float | None = None

    limit_parameter: ClassVar[str] = "limit"

    def __post_init__(self):
        _check_statistic(self.statistic)
        _positive("limit", self.limit)
        object.__setattr__(self, "zone_limits", tuple(float(k) for k in self.zone_limits))
        object.__setattr__(self, "shrinkage", tuple(float(s) for s in self.shrinkage))
        _check_zone_limits(self.zone_limits, 4)
        if len(self.shrinkage) != 5 or any(s < 0 for s in self.shrinkage):
            raise ConfigError("shrinkage needs five non-negative entries, one per zone")
        if self.min_halfwidth is None:
            object.__setattr__(self, "min_halfwidth", min(self.zone_limits[0], self.limit))
        if not 0.0 < self.min_halfwidth <= self.limit:
            raise ConfigError("min_halfwidth must lie in (0, limit]")

    @property
    def family(self) -> str:
        return "adaptive_zone"


@dataclass(frozen=True)
class AdCusumConfig:
    """CUSUM with zone-adaptive decision limits.

    The statistic is split into zones [0, k0), [k0, k1), [k1, limit).  Zone 0
    resets the limit to ``limit``; zones 1 and 2 shrink it by
    ``shrinkage[0]`` and ``shrinkage[1]``, never below k1.
    """

    statistic: str = "median"
    delta0: float = 0.15
    limit: float = 4.344
    mu0: float = 0.0
    input_scale: float = 1.0
    zone_limits: tuple | None = None
    shrinkage: tuple = (0.1, 0.2)

    limit_parameter: ClassVar[str] = "shrinkage"

    def __post_init__(self):
        _check_statistic(self.statistic)
        _positive("delta0", self.delta0)
        _positive("limit", self.limit)
        _positive("input_scale", self.input_scale)
        if self.zone_limits is None:
            object.__setattr__(self, "zone_limits", (self.limit / 3.0, 2.0 * self.limit / 3.0))
        object.__setattr__(self, "zone_limits", tuple(float(k) for k in self.zone_limits))
        object.__setattr__(self, "shrinkage", tuple(float(s) for s in self.shrinkage))
        k0, k1 = self.zone_limits
        if not 0.0 < k0 < k1 < self.limit:
            raise ConfigError(f"zone limits need 0 < k0 < k1 < limit, got {k0}, {k1}, {self.limit}")
        if len(self.shrinkage) != 2 or any(s < 0 for s in self.shrinkage):
            raise ConfigError("shrinkage needs two non-negative entries (s1, s2)")

    @property
    def family(self) -> str:
        return f"ad_cusum_{self.statistic}"


def _check_zone_limits(limits: tuple, count: int) -> None:
    if len(limits) != count:
        raise ConfigError(f"expected {count} zone limits, got {len(limits)}")
    if not limits[0] > 0 or any(b <= a for a, b in zip(limits, limits[1:])):
        raise ConfigError(f"zone limits must satisfy 0 < k1 < ... < k{count}, got {limits}")


# --------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class EmptyState:
    pass


@dataclass(frozen=True)
class CusumState:
    c_plus: Any
    c_minus: Any


@dataclass(frozen=True)
class EwmaState:
    z: Any


@dataclass(frozen=True)
class SparksState:
    c_up: Any
    c_down: Any
    delta_up: Any
    delta_down: Any
    previous: Any  # NaN before the first observation


@dataclass(frozen=True)
class ZoneState:
    score: Any
    side: Any  # +1 above CL, -1 below, 0 before the first point


@dataclass(frozen=True)
class AdaptiveZoneState:
    lcl: Any
    ucl: Any


@dataclass(frozen=True)
class AdCusumState:
    c_plus: Any
    c_minus: Any
    upper_limit: Any
    lower_limit: Any


def take(state, index):
    """Select replications ``index`` from a vectorized state."""
    return type(state)(**{f.name: getattr(state, f.name)[index] for f in fields(state)})


def _fill(value: float, size: int | None):
    if size is None:
        return float(value)
    return np.full(size, value, dtype=float)


# --------------------------------------------------------------------------
# step functions


def shewhart_step(config: ShewhartConfig, state: EmptyState, u) -> StepOutcome:
    _check_input(u)
    signal = (u < config.lcl) | (u > config.ucl)
    return StepOutcome(signal, state, {"u": u, "lcl": config.lcl, "ucl": config.ucl})


def cusum_step(config: CusumConfig, state: CusumState, u) -> StepOutcome:
    _check_input(u)
    x = u * config.input_scale
    c_plus = np.maximum(0.0, state.c_plus - (config.mu0 + config.delta0) + x)
    if config.sides == "two":
        c_minus = np.maximum(0.0, state.c_minus + (config.mu0 - config.delta0) - x)
        signal = (c_plus >= config.limit) | (c_minus >= config.limit)
    else:
        c_minus = state.c_minus
        signal = c_plus >= config.limit
    new = CusumState(c_plus, c_minus)
    return StepOutcome(
        signal, new, {"u": u, "c_plus": c_plus, "c_minus": c_minus, "limit": config.limit}
    )


def ewma_step(config: EwmaConfig, state: EwmaState, u) -> StepOutcome:
    _check_input(u)
    z = (1.0 - config.lam) * state.z + config.lam * u
    threshold = config.threshold
    signal = np.abs(z - config.mu0) > threshold
    return StepOutcome(signal, EwmaState(z), {"u": u, "z": z, "limit": threshold})


def huber_score(e, lam: float, k: float):
    """Huber score: lam*e inside [-k, k], e - sign(e)(1-lam)k outside."""
    e = np.asarray(e, dtype=float)
    inner = lam * e
    outer = e - np.sign(e) * (1.0 - lam) * k
    out = np.where(np.abs(e) <= k, inner, outer)
    return out if out.ndim else float(out)


def aewma_weight(e, lam: float, k: float):
    """Effective smoothing weight phi(e)/e, equal to lam at e = 0."""
    e = np.asarray(e, dtype=float)
    phi = huber_score(e, lam, k)
    safe = np.where(e == 0.0, 1.0, e)
    out = np.where(e == 0.0, lam, phi / safe)
    return out if out.ndim else float(out)


def aewma_step(config: AewmaConfig, state: EwmaState, u) -> StepOutcome:
    _check_input(u)
    e = u - state.z
    phi = huber_score(e, config.lam, config.huber_k)
    z = state.z + phi
    signal = np.abs(z - config.mu0) > config.limit
    return StepOutcome(
        signal,
        EwmaState(z),
        {"u": u, "error": e, "weight": aewma_weight(e, config.lam, config.huber_k),
         "z": z, "limit": config.limit},
    )


def sparks_step(config: SparksConfig, state: SparksState, u) -> StepOutcome:
    _check_input(u)
    w, dmin = config.w, config.delta_min
    prev = state.previous
    started = np.isfinite(prev)
    prev0 = np.where(started, prev, 0.0)
    delta_up = np.where(
        started, np.maximum(w * prev0 + (1.0 - w) * state.delta_up, dmin), state.delta_up
    )
    delta_down = np.where(
        started, np.maximum(-w * prev0 + (1.0 - w) * state.delta_down, dmin), state.delta_down
    )
    lo, hi = config.h_grid[0], config.h_grid[-1]
    clamped = (delta_up < lo) | (delta_up > hi) | (delta_down < lo) | (delta_down > hi)
    c_up = np.maximum(0.0, state.c_up + (u - delta_up / 2.0) / config.h(delta_up))
    c_down = np.maximum(0.0, state.c_down + (-u - delta_down / 2.0) / config.h(delta_down))
    signal = (c_up >= config.limit) | (c_down >= config.limit)
    if np.ndim(u) == 0:
        delta_up, delta_down = float(delta_up), float(delta_down)
        c_up, c_down = float(c_up), float(c_down)
        signal, clamped = bool(signal), bool(clamped)
    new = SparksState(c_up, c_down, delta_up, delta_down, u)
    return StepOutcome(
        signal,
        new,
        {"u": u, "c_up": c_up, "c_down": c_down, "delta_up": delta_up,
         "delta_down": delta_down, "limit": config.limit, "clamped": clamped},
    )


def zone_score(u, zone_limits, scores=ZONE_SCORES):
    """Signed zone index (-4..4, sign follows the side of CL) and its score.

    Zone 0 covers [0, k1) on either side; values at or beyond k4 fall in zone 4.
    """
    limits = np.asarray(zone_limits, dtype=float)
    index = np.searchsorted(limits, np.abs(u), side="right")
    score = np.asarray(scores, dtype=float)[index]
    sign = np.where(np.asarray(u) < 0, -1, 1)
    signed = sign * index
    if np.ndim(u) == 0:
        return int(signed), float(score)
    return signed, score


def zone_chart_step(config: ZoneConfig, state: ZoneState, u) -> StepOutcome:
    _check_input(u)
    zone, points = zone_score(u, config.zone_limits, config.scores)
    side = np.where(np.asarray(u) < 0, -1, 1)
    score = np.where(side == state.side, state.score + points, points)
    signal = score >= config.threshold
    if np.ndim(u) == 0:
        side, score, signal = int(side), float(score), bool(signal)
    return StepOutcome(
        signal,
        ZoneState(score, side),
        {"u": u, "zone": zone, "points": points, "score": score,
         "threshold": config.threshold},
    )


def adaptive_zone_step(config: AdaptiveZoneConfig, state: AdaptiveZoneState, u) -> StepOutcome:
    _check_input(u)
    signal = (u < state.lcl) | (u > state.ucl)
    limits = np.asarray(config.zone_limits)
    index = np.searchsorted(limits, np.abs(u), side="right")
    shrink = np.asarray(config.shrinkage)[index]
    below = np.asarray(u) < 0.0
    floor = config.min_halfwidth
    lcl0, ucl0 = -config.limit, config.limit
    lcl = np.where(below, np.minimum(state.lcl + shrink, -floor), lcl0)
    ucl = np.where(below, ucl0, np.maximum(state.ucl - shrink, floor))
    zone = np.where(below, -index, index)
    if np.ndim(u) == 0:
        lcl, ucl, signal, zone = float(lcl), float(ucl), bool(signal), int(zone)
    return StepOutcome(
        signal,
        AdaptiveZoneState(lcl, ucl),
        {"u": u, "lcl": state.lcl, "ucl": state.ucl, "zone": zone},
    )


def _adapt_limit(c, current, config: AdCusumConfig):
    k0, k1 = config.zone_limits
    s1, s2 = config.shrinkage
    shrink = np.where(c >= k1, s2, s1)
    return np.where(c < k0, config.limit, np.maximum(current - shrink, k1))


def ad_cusum_step(config: AdCusumConfig, state: AdCusumState, u) -> StepOutcome:
    _check_input(u)
    x = u * config.input_scale
    c_plus = np.maximum(0.0, state.c_plus - (config.mu0 + config.delta0) + x)
    c_minus = np.maximum(0.0, state.c_minus + (config.mu0 - config.delta0) - x)
    signal = (c_plus >= state.upper_limit) | (c_minus >= state.lower_limit)
    upper = _adapt_limit(c_plus, state.upper_limit, config)
    lower = _adapt_limit(c_minus, state.lower_limit, config)
    k0, k1 = config.zone_limits
    zone = np.where(c_plus < k0, 0, np.where(c_plus < k1, 1, 2))
    if np.ndim(u) == 0:
        c_plus, c_minus = float(c_plus), float(c_minus)
        upper, lower, signal, zone = float(upper), float(lower), bool(signal), int(zone)
    return StepOutcome(
        signal,
        AdCusumState(c_plus, c_minus, upper, lower),
        {"u": u, "c_plus": c_plus, "c_minus": c_minus, "upper_limit": state.upper_limit,
         "lower_limit": state.lower_limit, "zone": zone},
    )


# --------------------------------------------------------------------------
# dispatch


def reset(config, size: int | None = None):
    """Initial state; ``size`` gives vectorized state for that many replications."""
    if isinstance(config, ShewhartConfig):
        return EmptyState()
    if isinstance(config, CusumConfig):
        return CusumState(_fill(0.0, size), _fill(0.0, size))
    if isinstance(config, (EwmaConfig, AewmaConfig)):
        return EwmaState(_fill(config.mu0, size))
    if isinstance(config, SparksConfig):
        return SparksState(
            _fill(0.0, size), _fill(0.0, size), _fill(config.delta_min, size),
            _fill(config.delta_min, size), _fill(math.nan, size),
        )
    if isinstance(config, ZoneConfig):
        return ZoneState(_fill(0.0, size), np.zeros(size, dtype=int) if size is not None else 0)
    if isinstance(config, AdaptiveZoneConfig):
        return AdaptiveZoneState(_fill(-config.limit, size), _fill(config.limit, size))
    if isinstance(config, AdCusumConfig):
        return AdCusumState(
            _fill(0.0, size), _fill(0.0, size), _fill(config.limit, size), _fill(config.limit, size)
        )
    raise TypeError(f"not a chart config: {config!r}")


_STEPS = {
    ShewhartConfig: shewhart_step,
    CusumConfig: cusum_step,
    EwmaConfig: ewma_step,
    SparksConfig: sparks_step,
    AewmaConfig: aewma_step,
    ZoneConfig: zone_chart_step,
    AdaptiveZoneConfig: adaptive_zone_step,
    AdCusumConfig: ad_cusum_step,
}


def step(config, state, u) -> StepOutcome:
    return _STEPS[type(config)](config, state, u)


FAMILIES = {
    "shewhart_mean": (ShewhartConfig, "mean"),
    "shewhart_median": (ShewhartConfig, "median"),
    "cusum_mean": (CusumConfig, "mean"),
    "cusum_median": (CusumConfig, "median"),
    "ewma_mean": (EwmaConfig, "mean"),
    "ewma_median": (EwmaConfig, "median"),
    "sparks_acusum": (SparksConfig, None),
    "aewma": (AewmaConfig, None),
    "zone_classic": (ZoneConfig, None),
    "adaptive_zone": (AdaptiveZoneConfig, None),
    "ad_cusum_median": (AdCusumConfig, "median"),
    "ad_cusum_mean": (AdCusumConfig, "mean"),
}


def chart_from_dict(data: dict):
    """Build a chart config from a ``{"family": ..., **params}`` mapping."""
    data = dict(data)
    try:
        family = data.pop("family")
    except KeyError:
        raise ConfigError("chart needs a 'family' key") from None
    if family not in FAMILIES:
        raise ConfigError(f"unknown chart family {family!r}; known: {sorted(FAMILIES)}")
    cls, statistic = FAMILIES[family]
    if statistic is not None:
        if data.get("statistic", statistic) != statistic:
            raise ConfigError(f"family {family} implies statistic {statistic!r}")
        data["statistic"] = statistic
    if cls is ShewhartConfig and "limit" in data:
        limit = float(data.pop("limit"))
        data.setdefault("lcl", -limit)
        data.setdefault("ucl", limit)
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown parameters for {family}: {sorted(unknown)}")
    for key in ("h_grid", "h_values", "zone_limits", "scores", "shrinkage"):
        if isinstance(data.get(key), list):
            data[key] = tuple(data[key])
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def chart_to_dict(config) -> dict:
    out = {"family": config.family}
    for key, value in asdict(config).items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def get_parameter(config, name: str) -> float:
    if isinstance(config, ShewhartConfig) and name == "limit":
        return config.ucl
    if isinstance(config, AdCusumConfig) and name == "shrinkage":
        return config.shrinkage[0]
    value = getattr(config, name)
    return float(value)


def with_parameter(config, name: str, value: float):
    """Copy of ``config`` with one design parameter changed.

    ``limit`` on a Shewhart chart moves both limits symmetrically;
    ``shrinkage`` on an Ad-CUSUM chart sets s1 and keeps the ratio s2/s1.
    """
    if isinstance(config, ShewhartConfig) and name == "limit":
        return replace(config, lcl=config.center - value, ucl=config.center + value)
    if isinstance(config, AdCusumConfig) and name == "shrinkage":
        s1, s2 = config.shrinkage
        ratio = s2 / s1 if s1 > 0 else 1.0
        return replace(config, shrinkage=(value, value * ratio))
    if isinstance(config, AdaptiveZoneConfig) and name == "limit":
        return replace(config, limit=value, min_halfwidth=min(config.zone_limits[0], value))
    return replace(config, **{name: value})
