import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthtel.load import (
    LoadConfig,
    SeasonalComponent,
    TrendConfig,
    TrendInterval,
    TrendProfile,
    decompose_load,
    eval_trend,
    generate_load,
    generate_trend,
    spawn_rate,
)

# direct evaluation of 20 + 50 sin^2(2*pi*75/600) + 40 sin^2(2*pi*75/320)
# with the math module, frozen before the vectorized implementation existed
RAW_AT_75 = 84.61570560806459


def direct_raw(t, base, components, trend_value=0.0):
    return (1 + trend_value) * base + sum(a * math.sin(2 * math.pi * t / p) ** 2 for p, a in components)


def noiseless(*components, duration=1000, base=20.0):
    cfg = LoadConfig(
        base_load=base,
        components=tuple(SeasonalComponent(p, a, 0.0) for p, a in components),
        duration=duration,
    )
    return cfg, TrendProfile.flat(duration)


def test_degenerate_trend_range():
    cfg = TrendConfig(num_intervals=1, slope_range=(0.5, 0.5), sudden_shift_prob=0.0)
    prof = generate_trend(cfg, 100, np.random.default_rng(0))
    assert prof.intervals == (TrendInterval(0, 100, 0.5, False),)


def test_shift_prob_one_flags_every_interval():
    prof = generate_trend(TrendConfig(num_intervals=7, sudden_shift_prob=1.0), 100, np.random.default_rng(1))
    assert all(iv.sudden_shift for iv in prof.intervals)


def test_reference_trend_slopes_in_range():
    prof = generate_trend(TrendConfig(), 604800, np.random.default_rng(42))
    assert len(prof.intervals) == 30
    assert all(-0.98 <= iv.slope <= 2.5 for iv in prof.intervals)


def test_last_interval_absorbs_remainder():
    prof = generate_trend(TrendConfig(num_intervals=3), 10, np.random.default_rng(0))
    assert [(iv.start, iv.end) for iv in prof.intervals] == [(0, 3), (3, 6), (6, 10)]


def test_trend_rejects_short_duration():
    with pytest.raises(ValueError):
        generate_trend(TrendConfig(num_intervals=30), 29, np.random.default_rng(0))


@pytest.mark.parametrize("bad", [
    dict(num_intervals=0),
    dict(slope_range=(-1.0, 1.0)),
    dict(slope_range=(2.0, 1.0)),
    dict(sudden_shift_prob=1.5),
])
def test_trend_config_validation(bad):
    with pytest.raises(ValueError):
        TrendConfig(**bad)


def test_eval_trend_midpoint_interpolates():
    prof = TrendProfile((TrendInterval(0, 10, 0.0, True), TrendInterval(10, 20, 1.0)))
    assert eval_trend(prof, 15) == 0.5


def test_eval_trend_sudden_shift_is_constant():
    prof = TrendProfile((TrendInterval(0, 10, 0.3), TrendInterval(10, 20, 2.0, True)))
    assert {eval_trend(prof, t) for t in range(10, 20)} == {2.0}


def test_eval_trend_starts_from_zero():
    prof = generate_trend(TrendConfig(sudden_shift_prob=0.0), 604800, np.random.default_rng(42))
    assert eval_trend(prof, 0) == 0.0


def test_eval_trend_out_of_range():
    prof = TrendProfile.flat(10)
    with pytest.raises(IndexError):
        eval_trend(prof, 10)
    with pytest.raises(IndexError):
        eval_trend(prof, -1)


def test_series_matches_scalar_evaluation():
    prof = generate_trend(TrendConfig(num_intervals=9, sudden_shift_prob=0.3), 997, np.random.default_rng(3))
    assert np.array_equal(prof.series(), [eval_trend(prof, t) for t in range(997)])


def test_raw_single_component():
    cfg, trend = noiseless((600, 50))
    raw = generate_load(cfg, trend, np.random.default_rng(0)).raw
    assert raw[150] == pytest.approx(70.0, abs=1e-12)
    assert raw[0] == 20.0


def test_raw_two_components_matches_frozen_value():
    cfg, trend = noiseless((600, 50), (320, 40))
    raw = generate_load(cfg, trend, np.random.default_rng(0)).raw
    assert raw[75] == pytest.approx(RAW_AT_75, abs=1e-9)
    assert direct_raw(75, 20.0, [(600, 50), (320, 40)]) == pytest.approx(RAW_AT_75, abs=1e-12)


def test_users_rounded_and_clamped():
    cfg = LoadConfig(base_load=1.0, components=(SeasonalComponent(10, 5.0, 4.0),), duration=5000,
                     trend=TrendConfig(num_intervals=2, slope_range=(-0.99, -0.99)))
    trend = generate_trend(cfg.trend, cfg.duration, np.random.default_rng(0))
    prof = generate_load(cfg, trend, np.random.default_rng(1))
    assert prof.users.min() == 0
    assert np.array_equal(prof.users, np.maximum(0, np.rint(prof.raw)))


def test_zero_noise_is_seed_independent():
    cfg = LoadConfig(components=tuple(SeasonalComponent(c.period, c.amplitude, 0.0) for c in LoadConfig().components),
                     duration=3000)
    trend = generate_trend(TrendConfig(sudden_shift_prob=0.0), 3000, np.random.default_rng(5))
    a = generate_load(cfg, trend, np.random.default_rng(1))
    b = generate_load(cfg, trend, np.random.default_rng(2))
    assert np.array_equal(a.users, b.users)


def test_decompose_zero_variance_noise_is_zero():
    cfg, trend = noiseless((600, 50), (30, 9))
    dec = decompose_load(cfg, trend, np.random.default_rng(0))
    assert not dec.noise.any()


def test_decompose_single_component():
    cfg, trend = noiseless((320, 40))
    dec = decompose_load(cfg, trend, np.random.default_rng(0))
    # subtracting the base back out costs at most one rounding step
    np.testing.assert_allclose(dec.total - 20.0, dec.seasonal[0], rtol=0, atol=1e-13)


def test_decompose_recombines_reference_config_bitwise():
    cfg = LoadConfig(duration=86400)
    trend = generate_trend(cfg.trend, cfg.duration, np.random.default_rng(7))
    dec = decompose_load(cfg, trend, np.random.default_rng(7))
    raw = generate_load(cfg, trend, np.random.default_rng(7)).raw
    assert np.array_equal(dec.total, raw)


def test_spawn_rate_examples():
    assert spawn_rate([20, 20, 20]).tolist() == [0, 0, 0]
    assert spawn_rate(np.arange(10))[1:-1].tolist() == [1.0] * 8
    assert spawn_rate([0, 3, 8])[1] == 4.0
    assert spawn_rate([5, 2]).tolist() == [-3.0, -3.0]


def test_spawn_rate_rejects_short_series():
    with pytest.raises(ValueError):
        spawn_rate([1])


def test_load_config_validation():
    with pytest.raises(ValueError):
        LoadConfig(base_load=0)
    with pytest.raises(ValueError):
        LoadConfig(components=())
    with pytest.raises(ValueError):
        LoadConfig(duration=1)
    with pytest.raises(ValueError):
        SeasonalComponent(0, 1)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, duration=st.integers(min_value=30, max_value=4000))
def test_recombination_property(seed, duration):
    cfg = LoadConfig(duration=duration)
    trend = generate_trend(cfg.trend, duration, np.random.default_rng(seed))
    dec = decompose_load(cfg, trend, np.random.default_rng(seed))
    parts = (1 + dec.trend) * dec.base_load
    for s, n in zip(dec.seasonal, dec.noise):
        parts = parts + s + n
    np.testing.assert_allclose(parts, generate_load(cfg, trend, np.random.default_rng(seed)).raw, rtol=0, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_spawn_rate_identity_property(seed):
    cfg = LoadConfig(duration=2000)
    trend = generate_trend(cfg.trend, cfg.duration, np.random.default_rng(seed))
    prof = generate_load(cfg, trend, np.random.default_rng(seed + 1))
    n = prof.users.astype(float)
    expected = [n[1] - n[0]] + [(n[t + 1] - n[t - 1]) / 2 for t in range(1, len(n) - 1)] + [n[-1] - n[-2]]
    assert np.array_equal(prof.spawn_rate, expected)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, m=st.integers(min_value=1, max_value=20))
def test_trend_continuity_property(seed, m):
    prof = generate_trend(TrendConfig(num_intervals=m, sudden_shift_prob=0.0), 50 * m, np.random.default_rng(seed))
    for iv, nxt in zip(prof.intervals, prof.intervals[1:]):
        # linear limit of interval i at its end equals the start value of i+1
        assert eval_trend(prof, nxt.start) == pytest.approx(iv.slope, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(period=st.integers(min_value=2, max_value=700), amp=st.floats(min_value=0, max_value=100))
def test_period_property(period, amp):
    cfg, trend = noiseless((period, amp), duration=3 * period)
    raw = generate_load(cfg, trend, np.random.default_rng(0)).raw
    np.testing.assert_allclose(raw[:period], raw[period:2 * period], rtol=0, atol=1e-9)
