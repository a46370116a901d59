from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilm_adl.behaviour import (
    DEFAULT_WINDOWS,
    MINUTES_PER_DAY,
    NOCTURNAL_INJECTIONS,
    DetectionEvent,
    LabelStats,
    ObservationWindow,
    RoutineProfile,
    assign_window,
    build_routine,
    circular_stats,
    clock_distance,
    event_zscore,
    sankey_document,
    sankey_flows,
    simulate_routine,
    validate_windows,
    zscore_anomalies,
)
from nilm_adl.signal_model import ApplianceLabel

DAY0 = datetime(2021, 3, 1, tzinfo=timezone.utc)
K = ApplianceLabel.KETTLE


def ev(minute, label=K, day=0):
    return DetectionEvent(DAY0 + timedelta(days=day, minutes=minute), label, f"h:{label.slug}")


events_strategy = st.lists(
    st.tuples(st.integers(0, 30), st.integers(0, MINUTES_PER_DAY - 1), st.sampled_from(list(ApplianceLabel))),
    max_size=80,
)


def test_default_windows_partition_day():
    validate_windows(DEFAULT_WINDOWS)
    assert len(DEFAULT_WINDOWS) == 7
    assert sum(w.length for w in DEFAULT_WINDOWS) == MINUTES_PER_DAY
    for m in range(MINUTES_PER_DAY):
        assert sum(w.contains(m) for w in DEFAULT_WINDOWS) == 1


def test_window_errors():
    with pytest.raises(ValueError, match="uncovered"):
        validate_windows([ObservationWindow("a", 0, 600)])
    with pytest.raises(ValueError, match="overlap"):
        validate_windows([ObservationWindow("a", 0, 0), ObservationWindow("b", 5, 10)])
    with pytest.raises(ValueError):
        ObservationWindow("a", 0, 1440)


def test_assign_window_boundaries():
    assert assign_window(DAY0 + timedelta(hours=4, minutes=59)).name == "Overnight"
    assert assign_window(DAY0 + timedelta(hours=5)).name == "EarlyMorning"
    assert assign_window(DAY0 + timedelta(hours=23)).name == "Overnight"


def test_circular_mean_wraps_midnight():
    mean, std = circular_stats([23 * 60 + 50, 10])
    assert clock_distance(mean, 0) < 1e-9
    assert 0 < std < 15
    assert circular_stats([600, 600]) == pytest.approx((600.0, 0.0))
    assert clock_distance(10, 1430) == 20


def test_zscore_semantics():
    stats = LabelStats(10, 420.0, 30.0)
    assert event_zscore(420 + 90, stats) == pytest.approx(3.0)
    assert event_zscore(420 - 90, stats) == pytest.approx(3.0)
    assert event_zscore(420, LabelStats(3, 420.0, 0.0)) == 0.0
    assert event_zscore(421, LabelStats(3, 420.0, 0.0)) == float("inf")


def test_threshold_zero_flags_everything_off_mean():
    base = build_routine([ev(400), ev(440), ev(420, day=1)])
    probe = [ev(420, day=2), ev(430, day=2), ev(100, day=3)]
    rep = zscore_anomalies(probe, base, 0.0)
    mean = base.stats[K].mean_minute
    assert [e.flagged for e in rep.entries] == [clock_distance(420, mean) > 1e-9, True, True]
    with pytest.raises(ValueError):
        zscore_anomalies(probe, base, -1)


def test_unscored_labels():
    base = build_routine([ev(400)])
    rep = zscore_anomalies([ev(10), ev(10, ApplianceLabel.TOASTER)], base)
    assert all(e.z is None and not e.flagged for e in rep.entries)


@given(events_strategy)
def test_conservation(raw):
    events = [ev(m, lab, d) for d, m, lab in raw]
    prof = build_routine(events)
    flows = sankey_flows(prof)
    assert prof.total == sum(prof.hour_flows.values()) == sum(f.weight for f in flows) == len(events)
    doc = sankey_document(flows)
    assert sum(link["value"] for link in doc["links"]) == len(events)
    assert sum(s.n for s in prof.stats.values()) == len(events)


@given(events_strategy)
def test_routine_round_trip(raw):
    prof = build_routine([ev(m, lab, d) for d, m, lab in raw])
    back = RoutineProfile.from_dict(prof.to_dict())
    assert back.to_dict() == prof.to_dict()


@given(st.integers(0, 2**31), st.integers(-720, 720))
def test_zscore_invariant_to_clock_rotation(seed, shift):
    rng = np.random.default_rng(seed)
    ms = rng.integers(400, 500, size=20)
    probe = 200
    a = build_routine([ev(int(m)) for m in ms]).stats[K]
    b = build_routine([ev(int(m + shift) % MINUTES_PER_DAY) for m in ms]).stats[K]
    za = event_zscore(probe, a)
    zb = event_zscore((probe + shift) % MINUTES_PER_DAY, b)
    assert za == pytest.approx(zb, rel=1e-6)


def test_simulation_seeded_and_injections_dated():
    a = simulate_routine(DAY0, 30, seed=3)
    assert a == simulate_routine(DAY0, 30, seed=3)
    inj = simulate_routine(DAY0, 182, seed=3, injections=NOCTURNAL_INJECTIONS)
    night = [e for e in inj if e.minute_of_day < 300]
    assert len(night) == 4
    with pytest.raises(ValueError):
        DetectionEvent(DAY0, K, "x", 1.5)
