"""Multiplicative load anomalies injected tick by tick into a user series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import as_rng
from .load import LoadProfile, spawn_rate


@dataclass(frozen=True)
class LoadAnomalyConfig:
    """Per-tick start probability, duration range (ticks), multiplier range."""

    probability: float = 0.00025
    duration_range: tuple[int, int] = (60, 600)
    multiplier_range: tuple[float, float] = (1.0, 2.0)

    def __post_init__(self) -> None:
        a, b = self.duration_range
        c, d = self.multiplier_range
        if not 0 <= self.probability <= 1:
            raise ValueError("probability must be in [0, 1]")
        if int(a) != a or int(b) != b or not 0 < a <= b:
            raise ValueError(f"duration_range must be integers with 0 < a <= b, got {self.duration_range}")
        if not 0 <= c <= d:
            raise ValueError(f"multiplier_range must satisfy 0 <= c <= d, got {self.multiplier_range}")

    @property
    def mean_duration(self) -> float:
        a, b = self.duration_range
        return (a + b) / 2


@dataclass(frozen=True)
class LoadAnomalyLabel:
    start_tick: int
    end_tick: int  # inclusive
    multiplier: float


def inject_load_anomalies(
    profile: LoadProfile, cfg: LoadAnomalyConfig, rng=None
) -> tuple[LoadProfile, list[LoadAnomalyLabel], np.ndarray]:
    """Return the modified profile, one label per anomaly, and a per-tick mask.

    A tick inside an active anomaly (``tick <= end``, inclusive) is scaled by the
    active multiplier. Otherwise the tick starts a new anomaly with probability
    ``cfg.probability``: the duration is drawn uniformly from the integer range,
    then the multiplier from ``U(c, d)``, and the start tick itself is scaled.

    One uniform is drawn per tick up front; only the starts consume further
    draws, in start order.
    """
    n = len(profile)
    if n == 0:
        raise ValueError("cannot inject anomalies into an empty profile")
    rng = as_rng(rng)
    a, b = (int(x) for x in cfg.duration_range)
    c, d = cfg.multiplier_range

    draws = rng.random(n)
    labels: list[LoadAnomalyLabel] = []
    end = -1
    for t in np.flatnonzero(draws < cfg.probability):
        if t <= end:
            continue
        duration = int(rng.integers(a, b, endpoint=True))
        multiplier = float(rng.uniform(c, d))
        end = int(t) + duration
        labels.append(LoadAnomalyLabel(int(t), min(end, n - 1), multiplier))

    mask = np.zeros(n, dtype=bool)
    raw = profile.raw.copy()
    for lab in labels:
        sl = slice(lab.start_tick, lab.end_tick + 1)
        mask[sl] = True
        raw[sl] = profile.raw[sl] * lab.multiplier
    # unmarked ticks keep their published counts untouched
    users = profile.users.copy()
    users[mask] = np.maximum(0, np.rint(raw[mask])).astype(users.dtype)
    modified = LoadProfile(users=users, spawn_rate=spawn_rate(users), raw=raw)
    return modified, labels, mask


def expected_anomaly_count(cfg: LoadAnomalyConfig, n_ticks: int) -> float:
    """Renewal approximation of the number of anomalies started in ``n_ticks``.

    Each anomaly holds ``1 + duration`` ticks (the end comparison is inclusive),
    followed by a geometric wait with mean ``1/p`` ticks including the start.
    """
    p = cfg.probability
    if p == 0:
        return 0.0
    return n_ticks * p / (1 + p * cfg.mean_duration)
