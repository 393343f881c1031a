import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthtel.load import LoadConfig, LoadProfile, generate_load, generate_trend
from synthtel.load_anomaly import LoadAnomalyConfig, expected_anomaly_count, inject_load_anomalies

# renewal Monte-Carlo (geometric waits, 20000 runs) of started anomalies for
# p=0.00025, durations U{60..600}, 604800 ticks; standard error 0.08
MC_REFERENCE_COUNT = 139.59


def reference_profile(seed=0, duration=604800):
    cfg = LoadConfig(duration=duration)
    trend = generate_trend(cfg.trend, duration, np.random.default_rng(seed))
    return generate_load(cfg, trend, np.random.default_rng(seed + 1))


def test_zero_probability_leaves_profile_alone():
    prof = reference_profile(duration=5000)
    out, labels, mask = inject_load_anomalies(prof, LoadAnomalyConfig(probability=0.0), np.random.default_rng(0))
    assert labels == [] and not mask.any()
    assert np.array_equal(out.users, prof.users)


def test_identity_multiplier_covers_every_tick():
    prof = reference_profile(duration=500)
    cfg = LoadAnomalyConfig(probability=1.0, duration_range=(500, 500), multiplier_range=(1.0, 1.0))
    out, labels, mask = inject_load_anomalies(prof, cfg, np.random.default_rng(0))
    assert mask.all()
    assert len(labels) == 1 and (labels[0].start_tick, labels[0].end_tick) == (0, 499)
    assert np.array_equal(out.users, prof.users)


def test_reference_run_value_law():
    prof = reference_profile(seed=11)
    out, labels, mask = inject_load_anomalies(prof, LoadAnomalyConfig(), np.random.default_rng(11))
    assert labels
    for lab in labels:
        assert 1.0 <= lab.multiplier <= 2.0
        sl = slice(lab.start_tick, lab.end_tick + 1)
        assert np.array_equal(out.users[sl], np.maximum(0, np.rint(prof.raw[sl] * lab.multiplier)))
    assert np.array_equal(out.users[~mask], prof.users[~mask])
    assert np.array_equal(out.spawn_rate[1:-1], (out.users[2:] - out.users[:-2]) / 2)


def test_end_is_inclusive():
    prof = reference_profile(duration=50)
    cfg = LoadAnomalyConfig(probability=1.0, duration_range=(1, 1), multiplier_range=(2.0, 2.0))
    _, labels, mask = inject_load_anomalies(prof, cfg, np.random.default_rng(0))
    # a start and its one follow-up tick per cycle
    assert [(lab.start_tick, lab.end_tick) for lab in labels[:3]] == [(0, 1), (2, 3), (4, 5)]
    assert mask.all()


def test_label_clipped_to_profile():
    prof = reference_profile(duration=100)
    cfg = LoadAnomalyConfig(probability=1.0, duration_range=(600, 600))
    _, labels, _ = inject_load_anomalies(prof, cfg, np.random.default_rng(0))
    assert labels[0].end_tick == 99


def test_expected_count_examples():
    assert expected_anomaly_count(LoadAnomalyConfig(probability=0.0), 1000) == 0.0
    assert expected_anomaly_count(LoadAnomalyConfig(probability=1.0, duration_range=(1, 1)), 1000) == 500.0
    ref = expected_anomaly_count(LoadAnomalyConfig(), 604800)
    assert ref == pytest.approx(MC_REFERENCE_COUNT, rel=0.05)


def test_expected_count_matches_hand_simulation():
    prof = reference_profile(duration=1000)
    cfg = LoadAnomalyConfig(probability=1.0, duration_range=(1, 1))
    _, labels, _ = inject_load_anomalies(prof, cfg, np.random.default_rng(0))
    assert len(labels) == expected_anomaly_count(cfg, 1000)


def test_config_validation():
    for bad in (dict(probability=-0.1), dict(duration_range=(0, 5)), dict(duration_range=(5, 4)),
                dict(duration_range=(1.5, 3)), dict(multiplier_range=(2.0, 1.0)), dict(multiplier_range=(-1.0, 1.0))):
        with pytest.raises(ValueError):
            LoadAnomalyConfig(**bad)


def test_empty_profile_rejected():
    empty = LoadProfile(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        inject_load_anomalies(empty, LoadAnomalyConfig())


def test_marked_fraction_grows_with_probability():
    prof = reference_profile(duration=200_000)
    fractions = []
    for p in (0.0001, 0.0005, 0.002):
        cfg = LoadAnomalyConfig(probability=p)
        fr = [inject_load_anomalies(prof, cfg, np.random.default_rng(s))[2].mean() for s in range(20)]
        fractions.append(np.mean(fr))
    assert fractions == sorted(fractions)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.floats(0, 0.05),
       a=st.integers(1, 50), extra=st.integers(0, 50))
def test_labels_and_mask_agree(seed, p, a, extra):
    prof = reference_profile(duration=3000)
    cfg = LoadAnomalyConfig(probability=p, duration_range=(a, a + extra))
    out1, labels, mask = inject_load_anomalies(prof, cfg, np.random.default_rng(seed))
    covered = np.zeros(len(prof), dtype=int)
    for lab in labels:
        assert lab.start_tick <= lab.end_tick
        covered[lab.start_tick:lab.end_tick + 1] += 1
    assert covered.max(initial=0) <= 1
    assert np.array_equal(covered == 1, mask)
    out2, labels2, _ = inject_load_anomalies(prof, cfg, np.random.default_rng(seed))
    assert labels == labels2 and np.array_equal(out1.users, out2.users)
