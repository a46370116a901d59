"""Observation windows, routine profiles, Sankey flows and circular Z-score anomalies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .signal_model import ApplianceLabel

MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class DetectionEvent:
    timestamp: datetime
    label: ApplianceLabel
    device_id: str
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def minute_of_day(self) -> float:
        t = self.timestamp
        return t.hour * 60 + t.minute + (t.second + t.microsecond / 1e6) / 60.0


def device_id(home: str, label: ApplianceLabel) -> str:
    return f"{home}:{label.slug}"


@dataclass(frozen=True)
class ObservationWindow:
    """Half-open [start_minute, end_minute) of the day; wraps midnight when end <= start."""

    name: str
    start_minute: int
    end_minute: int

    def __post_init__(self) -> None:
        for m in (self.start_minute, self.end_minute):
            if not 0 <= m < MINUTES_PER_DAY:
                raise ValueError(f"window {self.name!r}: minute {m} outside [0, 1440)")

    @property
    def length(self) -> int:
        return (self.end_minute - self.start_minute) % MINUTES_PER_DAY or MINUTES_PER_DAY

    def contains(self, minute: float) -> bool:
        m = minute % MINUTES_PER_DAY
        if self.start_minute < self.end_minute:
            return self.start_minute <= m < self.end_minute
        return m >= self.start_minute or m < self.end_minute


DEFAULT_WINDOWS: tuple[ObservationWindow, ...] = (
    ObservationWindow("Overnight", 23 * 60, 5 * 60),
    ObservationWindow("EarlyMorning", 5 * 60, 8 * 60),
    ObservationWindow("Morning", 8 * 60, 11 * 60),
    ObservationWindow("Midday", 11 * 60, 14 * 60),
    ObservationWindow("Afternoon", 14 * 60, 17 * 60),
    ObservationWindow("Evening", 17 * 60, 20 * 60),
    ObservationWindow("Night", 20 * 60, 23 * 60),
)


def validate_windows(windows) -> tuple[ObservationWindow, ...]:
    """Reject window sets that do not tile the 1440-minute day exactly once."""
    windows = tuple(windows)
    if not windows:
        raise ValueError("at least one observation window is required")
    names = [w.name for w in windows]
    if len(set(names)) != len(names):
        raise ValueError("observation window names must be unique")
    cover = np.zeros(MINUTES_PER_DAY, dtype=int)
    for w in windows:
        idx = (w.start_minute + np.arange(w.length)) % MINUTES_PER_DAY
        cover[idx] += 1
    if np.any(cover == 0):
        raise ValueError(f"observation windows leave minute {int(np.argmax(cover == 0))} uncovered")
    if np.any(cover > 1):
        raise ValueError(f"observation windows overlap at minute {int(np.argmax(cover > 1))}")
    return windows


def assign_window(timestamp: datetime, windows=DEFAULT_WINDOWS) -> ObservationWindow:
    minute = timestamp.hour * 60 + timestamp.minute
    for w in windows:
        if w.contains(minute):
            return w
    raise ValueError("observation windows do not cover the whole day")


def circular_stats(minutes) -> tuple[float, float]:
    """Circular mean (minutes of day) and circular standard deviation (minutes).

    The deviation is ``sqrt(-2 ln R)`` on the 24-hour circle, R being the mean
    resultant length.
    """
    m = np.asarray(minutes, dtype=float)
    if m.size == 0:
        return float("nan"), float("nan")
    theta = 2 * np.pi * m / MINUTES_PER_DAY
    C, S = np.mean(np.cos(theta)), np.mean(np.sin(theta))
    R = min(math.hypot(C, S), 1.0)
    mean = (math.atan2(S, C) % (2 * np.pi)) * MINUTES_PER_DAY / (2 * np.pi)
    if R <= 0:
        return mean, float("inf")
    if 1.0 - R < 1e-12:
        return float(mean), 0.0
    std = math.sqrt(max(-2.0 * math.log(R), 0.0)) * MINUTES_PER_DAY / (2 * np.pi)
    return float(mean), float(std)


def clock_distance(a: float, b: float) -> float:
    """Shortest distance in minutes between two times of day (at most 720)."""
    d = abs(a - b) % MINUTES_PER_DAY
    return min(d, MINUTES_PER_DAY - d)


@dataclass
class LabelStats:
    n: int
    mean_minute: float
    std_minutes: float

    @property
    def mean_hour(self) -> float:
        return self.mean_minute / 60.0


@dataclass
class RoutineProfile:
    windows: tuple[ObservationWindow, ...]
    counts: dict[tuple[ApplianceLabel, str], int] = field(default_factory=dict)
    hour_flows: dict[tuple[ApplianceLabel, int], int] = field(default_factory=dict)
    stats: dict[ApplianceLabel, LabelStats] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        return {
            "windows": [
                {"name": w.name, "start_minute": w.start_minute, "end_minute": w.end_minute}
                for w in self.windows
            ],
            "counts": [
                {"label": label.slug, "window": name, "count": n}
                for (label, name), n in sorted(self.counts.items(), key=lambda kv: (kv[0][0], kv[0][1]))
            ],
            "hour_flows": [
                {"label": label.slug, "hour": hour, "count": n}
                for (label, hour), n in sorted(self.hour_flows.items())
            ],
            "stats": [
                {
                    "label": label.slug,
                    "n": s.n,
                    "mean_minute": s.mean_minute,
                    "std_minutes": s.std_minutes,
                }
                for label, s in sorted(self.stats.items())
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RoutineProfile":
        windows = validate_windows(
            ObservationWindow(w["name"], int(w["start_minute"]), int(w["end_minute"]))
            for w in doc["windows"]
        )
        prof = cls(windows)
        for c in doc["counts"]:
            prof.counts[(ApplianceLabel.parse(c["label"]), c["window"])] = int(c["count"])
        for h in doc["hour_flows"]:
            prof.hour_flows[(ApplianceLabel.parse(h["label"]), int(h["hour"]))] = int(h["count"])
        for s in doc["stats"]:
            prof.stats[ApplianceLabel.parse(s["label"])] = LabelStats(
                int(s["n"]), float(s["mean_minute"]), float(s["std_minutes"])
            )
        return prof


def build_routine(events, windows=DEFAULT_WINDOWS) -> RoutineProfile:
    windows = validate_windows(windows)
    prof = RoutineProfile(windows)
    minutes: dict[ApplianceLabel, list[float]] = {}
    for ev in events:
        w = assign_window(ev.timestamp, windows)
        key = (ev.label, w.name)
        prof.counts[key] = prof.counts.get(key, 0) + 1
        hkey = (ev.label, ev.timestamp.hour)
        prof.hour_flows[hkey] = prof.hour_flows.get(hkey, 0) + 1
        minutes.setdefault(ev.label, []).append(ev.minute_of_day)
    for label, ms in minutes.items():
        mean, std = circular_stats(ms)
        prof.stats[label] = LabelStats(len(ms), mean, std)
    return prof


@dataclass(frozen=True)
class SankeyFlow:
    source: ApplianceLabel
    target: int  # hour of day
    weight: int


def sankey_flows(profile: RoutineProfile) -> list[SankeyFlow]:
    return [
        SankeyFlow(label, hour, n)
        for (label, hour), n in sorted(profile.hour_flows.items())
        if n > 0
    ]


def sankey_document(flows: list[SankeyFlow]) -> dict:
    """``{nodes, links}`` with links referencing node indices, as Sankey renderers expect."""
    labels = sorted({f.source for f in flows})
    hours = sorted({f.target for f in flows})
    nodes = [{"name": label.slug} for label in labels] + [{"name": f"{h:02d}:00"} for h in hours]
    label_idx = {label: i for i, label in enumerate(labels)}
    hour_idx = {h: len(labels) + i for i, h in enumerate(hours)}
    links = [
        {"source": label_idx[f.source], "target": hour_idx[f.target], "value": f.weight}
        for f in flows
    ]
    return {"nodes": nodes, "links": links}


@dataclass(frozen=True)
class ScoredEvent:
    event: DetectionEvent
    z: float | None  # None when the label has too little baseline to score
    flagged: bool


@dataclass
class AnomalyReport:
    threshold: float
    entries: list[ScoredEvent]

    @property
    def flagged(self) -> list[ScoredEvent]:
        return [e for e in self.entries if e.flagged]


def event_zscore(minute: float, stats: LabelStats) -> float:
    """Circular clock deviation from the baseline mean, in baseline standard deviations."""
    dev = clock_distance(minute, stats.mean_minute)
    if dev < 1e-9:
        dev = 0.0
    if stats.std_minutes == 0:
        return 0.0 if dev == 0 else math.inf
    return dev / stats.std_minutes


def zscore_anomalies(events, baseline: RoutineProfile, threshold: float = 3.0) -> AnomalyReport:
    """Flag events with ``|z| >= threshold``; an event sitting exactly on its mean is never flagged.

    Labels with fewer than two baseline events are reported unscored.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    entries = []
    for ev in events:
        stats = baseline.stats.get(ev.label)
        if stats is None or stats.n < 2:
            entries.append(ScoredEvent(ev, None, False))
            continue
        z = event_zscore(ev.minute_of_day, stats)
        entries.append(ScoredEvent(ev, z, z > 0 and abs(z) >= threshold))
    return AnomalyReport(threshold, entries)


@dataclass(frozen=True)
class RoutineHabit:
    """An appliance used around ``mean_minute`` (uniform +/- ``spread_minutes``) with daily probability."""

    label: ApplianceLabel
    mean_minute: int
    spread_minutes: int
    probability: float = 1.0


DEFAULT_HABITS: tuple[RoutineHabit, ...] = (
    RoutineHabit(ApplianceLabel.KETTLE, 7 * 60 + 30, 30),
    RoutineHabit(ApplianceLabel.KETTLE, 9 * 60 + 30, 30),
    RoutineHabit(ApplianceLabel.TOASTER, 8 * 60, 30),
    RoutineHabit(ApplianceLabel.MICROWAVE, 12 * 60 + 30, 30),
    RoutineHabit(ApplianceLabel.COOKER, 18 * 60, 40, 0.8),
    RoutineHabit(ApplianceLabel.WASHING_MACHINE, 10 * 60 + 30, 60, 2 / 7),
)

# (day offset into the period, label, minute of day); all between 00:00 and 05:00
NOCTURNAL_INJECTIONS: tuple[tuple[int, ApplianceLabel, int], ...] = (
    (41, ApplianceLabel.KETTLE, 1 * 60 + 40),
    (97, ApplianceLabel.KETTLE, 3 * 60 + 15),
    (133, ApplianceLabel.TOASTER, 2 * 60 + 50),
    (160, ApplianceLabel.KETTLE, 4 * 60 + 20),
)


def simulate_routine(
    start: datetime,
    days: int,
    seed: int = 0,
    habits=DEFAULT_HABITS,
    injections=(),
    home: str = "home0",
) -> list[DetectionEvent]:
    """Daily detections drawn from ``habits`` plus any injected (day, label, minute) events."""
    rng = np.random.default_rng(seed)
    events = []
    day0 = start.replace(hour=0, minute=0, second=0, microsecond=0)
    for day in range(days):
        for h in habits:
            # draw both numbers every day so habits stay independent of each other
            use = rng.random() < h.probability
            offset = int(rng.integers(-h.spread_minutes, h.spread_minutes + 1))
            if use:
                minute = (h.mean_minute + offset) % MINUTES_PER_DAY
                ts = day0 + timedelta(days=day, minutes=minute)
                events.append(DetectionEvent(ts, h.label, device_id(home, h.label), 1.0))
    for day, label, minute in injections:
        ts = day0 + timedelta(days=day, minutes=minute)
        events.append(DetectionEvent(ts, label, device_id(home, label), 1.0))
    events.sort(key=lambda e: (e.timestamp, e.label))
    return events
