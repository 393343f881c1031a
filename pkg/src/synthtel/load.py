"""Baseline user load: piecewise-linear trend, sine-squared seasonality and spawn rate.

The user count at tick ``t`` is::

    raw(t) = (1 + trend(t)) * base_load + sum_i A_i * (sin^2(2*pi*t / T_i) + wn_i(t))

where ``wn_i`` is zero-mean Gaussian white noise whose *variance* is the
component's ``noise_variance``. Published user counts are ``max(0, round(raw))``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import as_rng


@dataclass(frozen=True)
class SeasonalComponent:
    """One sine-squared term: period in ticks, amplitude in users."""

    period: float
    amplitude: float
    noise_variance: float = 0.0

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ValueError(f"period must be > 0, got {self.period}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.noise_variance < 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")


@dataclass(frozen=True)
class TrendConfig:
    num_intervals: int = 30
    slope_range: tuple[float, float] = (-0.98, 2.5)
    sudden_shift_prob: float = 0.0001

    def __post_init__(self) -> None:
        lo, hi = self.slope_range
        if self.num_intervals < 1:
            raise ValueError("num_intervals must be >= 1")
        if lo > hi:
            raise ValueError(f"slope_range is empty: {self.slope_range}")
        # keeps the (1 + trend) multiplier positive
        if lo <= -1:
            raise ValueError(f"slope_range lower bound must be > -1, got {lo}")
        if not 0 <= self.sudden_shift_prob <= 1:
            raise ValueError("sudden_shift_prob must be in [0, 1]")


@dataclass(frozen=True)
class TrendInterval:
    start: int
    end: int  # exclusive
    slope: float
    sudden_shift: bool = False


@dataclass(frozen=True)
class TrendProfile:
    """Realized trend. Intervals partition ``[0, duration)`` in order."""

    intervals: tuple[TrendInterval, ...]

    def __post_init__(self) -> None:
        if not self.intervals:
            raise ValueError("a trend needs at least one interval")
        expected = 0
        for iv in self.intervals:
            if iv.start != expected or iv.end <= iv.start:
                raise ValueError(f"intervals must be contiguous and non-empty, bad {iv}")
            expected = iv.end

    @property
    def duration(self) -> int:
        return self.intervals[-1].end

    @property
    def starts(self) -> list[int]:
        return [iv.start for iv in self.intervals]

    @classmethod
    def flat(cls, duration: int, level: float = 0.0) -> TrendProfile:
        """A single interval at constant ``level`` (shifted straight to it)."""
        return cls((TrendInterval(0, duration, level, sudden_shift=True),))

    def __call__(self, t: int) -> float:
        return eval_trend(self, t)

    def series(self) -> np.ndarray:
        """Vectorized :func:`eval_trend` over every tick."""
        out = np.empty(self.duration, dtype=float)
        prev = 0.0
        for iv in self.intervals:
            if iv.sudden_shift:
                out[iv.start:iv.end] = iv.slope
            else:
                u = (np.arange(iv.start, iv.end, dtype=float) - iv.start) / (iv.end - iv.start)
                out[iv.start:iv.end] = prev * (1 - u) + iv.slope * u
            prev = iv.slope
        return out


def generate_trend(cfg: TrendConfig, duration: int, rng=None) -> TrendProfile:
    """Draw ``cfg.num_intervals`` equal-width intervals with uniform slopes.

    The last interval absorbs ``duration % num_intervals``. Each interval is
    independently a sudden shift with probability ``cfg.sudden_shift_prob``.
    """
    m = cfg.num_intervals
    if duration < m:
        raise ValueError(f"duration {duration} cannot hold {m} non-empty intervals")
    rng = as_rng(rng)
    lo, hi = cfg.slope_range
    slopes = rng.uniform(lo, hi, size=m)
    shifts = rng.random(m) < cfg.sudden_shift_prob
    width = duration // m
    intervals = []
    for i in range(m):
        start = i * width
        end = duration if i == m - 1 else start + width
        intervals.append(TrendInterval(start, end, float(slopes[i]), bool(shifts[i])))
    return TrendProfile(tuple(intervals))


def eval_trend(profile: TrendProfile, t: int) -> float:
    if not 0 <= t < profile.duration:
        raise IndexError(f"tick {t} outside [0, {profile.duration})")
    i = bisect.bisect_right(profile.starts, t) - 1
    iv = profile.intervals[i]
    if iv.sudden_shift:
        return iv.slope
    prev = profile.intervals[i - 1].slope if i > 0 else 0.0
    u = (float(t) - iv.start) / (iv.end - iv.start)
    return prev * (1 - u) + iv.slope * u


def _default_components() -> tuple[SeasonalComponent, ...]:
    return (
        SeasonalComponent(600, 50, 0.1),
        SeasonalComponent(320, 40, 0.05),
        SeasonalComponent(30, 9, 0.01),
        SeasonalComponent(60, 16, 0.05),
    )


@dataclass(frozen=True)
class LoadConfig:
    base_load: float = 20.0
    components: tuple[SeasonalComponent, ...] = field(default_factory=_default_components)
    trend: TrendConfig = field(default_factory=TrendConfig)
    duration: int = 604800
    tick_seconds: int = 1

    def __post_init__(self) -> None:
        if not self.base_load > 0:
            raise ValueError("base_load must be > 0")
        if self.duration < 2:
            raise ValueError("duration must be >= 2 ticks")
        if not self.components:
            raise ValueError("at least one seasonal component is required")
        if self.tick_seconds < 1:
            raise ValueError("tick_seconds must be a positive integer")


@dataclass
class LoadProfile:
    """Published user series. ``raw`` keeps the pre-rounding values."""

    users: np.ndarray
    spawn_rate: np.ndarray
    raw: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.users) == len(self.spawn_rate) == len(self.raw)):
            raise ValueError("users, spawn_rate and raw must share one tick index")

    def __len__(self) -> int:
        return len(self.users)

    @property
    def ticks(self) -> np.ndarray:
        return np.arange(len(self.users))

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> LoadProfile:
        raw = np.asarray(raw, dtype=float)
        users = round_users(raw)
        return cls(users=users, spawn_rate=spawn_rate(users), raw=raw)


@dataclass
class LoadDecomposition:
    trend: np.ndarray
    seasonal: np.ndarray  # (n_components, n_ticks), A_i * sin^2
    noise: np.ndarray  # (n_components, n_ticks), A_i * wn_i
    base_load: float

    @property
    def total(self) -> np.ndarray:
        """Recombined raw load; the same summation order generate_load uses."""
        out = (1 + self.trend) * self.base_load
        for s, n in zip(self.seasonal, self.noise):
            out = out + s
            out = out + n
        return out


def round_users(raw: np.ndarray) -> np.ndarray:
    return np.maximum(0, np.rint(raw)).astype(np.int64)


def decompose_load(cfg: LoadConfig, trend: TrendProfile, rng=None) -> LoadDecomposition:
    if trend.duration != cfg.duration:
        raise ValueError(f"trend covers {trend.duration} ticks, config wants {cfg.duration}")
    rng = as_rng(rng)
    t = np.arange(cfg.duration, dtype=float)
    k = len(cfg.components)
    seasonal = np.empty((k, cfg.duration))
    noise = np.empty((k, cfg.duration))
    for i, comp in enumerate(cfg.components):
        seasonal[i] = comp.amplitude * np.sin(2 * np.pi * t / comp.period) ** 2
        # drawn even at zero variance so the stream position never depends on it
        wn = rng.normal(0.0, math.sqrt(comp.noise_variance), size=cfg.duration)
        noise[i] = comp.amplitude * wn
    return LoadDecomposition(trend.series(), seasonal, noise, cfg.base_load)


def generate_load(cfg: LoadConfig, trend: TrendProfile, rng=None) -> LoadProfile:
    return LoadProfile.from_raw(decompose_load(cfg, trend, rng).total)


def spawn_rate(users) -> np.ndarray:
    """Central difference with h = 1 tick; one-sided at both ends.

    Units are users per tick. Negative values mean users are being removed.
    """
    n = np.asarray(users, dtype=float)
    if n.ndim != 1 or n.size < 2:
        raise ValueError("spawn_rate needs a 1-D series of length >= 2")
    r = np.empty_like(n)
    r[1:-1] = (n[2:] - n[:-2]) / 2.0
    r[0] = n[1] - n[0]
    r[-1] = n[-1] - n[-2]
    return r
