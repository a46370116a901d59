"""Appliance signatures, aggregate traces and the synthetic household generator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum, IntEnum
from typing import Sequence

import numpy as np

SAMPLE_INTERVAL_S = 10
FILTER_THRESHOLD_W = 300.0


class ApplianceLabel(IntEnum):
    KETTLE = 0
    TOASTER = 1
    MICROWAVE = 2
    WASHING_MACHINE = 3
    COOKER = 4

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @property
    def slug(self) -> str:
        """Name used in CSV/JSON files (``Kettle``, ``WashingMachine`` ...)."""
        return _SLUGS[self]

    @classmethod
    def parse(cls, text: str) -> "ApplianceLabel":
        key = text.strip().replace(" ", "").replace("_", "").lower()
        for label in cls:
            if _SLUGS[label].lower() == key:
                return label
        if key.isdigit() and int(key) in cls._value2member_map_:
            return cls(int(key))
        raise ValueError(f"unknown appliance label: {text!r}")


_SLUGS = {
    ApplianceLabel.KETTLE: "Kettle",
    ApplianceLabel.TOASTER: "Toaster",
    ApplianceLabel.MICROWAVE: "Microwave",
    ApplianceLabel.WASHING_MACHINE: "WashingMachine",
    ApplianceLabel.COOKER: "Cooker",
}
_DISPLAY_NAMES = {
    ApplianceLabel.KETTLE: "Kettle",
    ApplianceLabel.TOASTER: "Toaster",
    ApplianceLabel.MICROWAVE: "Microwave",
    ApplianceLabel.WASHING_MACHINE: "Washing Machine",
    ApplianceLabel.COOKER: "Cooker",
}


class DeviceCategory(Enum):
    TYPE1 = "on/off"
    TYPE2 = "multi-state"
    TYPE3 = "continuously variable"
    TYPE4 = "always-on"


LABEL_CATEGORY = {
    ApplianceLabel.KETTLE: DeviceCategory.TYPE1,
    ApplianceLabel.TOASTER: DeviceCategory.TYPE1,
    ApplianceLabel.MICROWAVE: DeviceCategory.TYPE2,
    ApplianceLabel.WASHING_MACHINE: DeviceCategory.TYPE2,
    ApplianceLabel.COOKER: DeviceCategory.TYPE2,
}


@dataclass(frozen=True)
class ApplianceSignature:
    """Parametric power profile: an ordered list of (watts, seconds) states.

    Only the onset state has to clear the highpass threshold; later states may
    dip below it (a microwave's magnetron pausing, a standby tail).
    """

    label: ApplianceLabel
    category: DeviceCategory
    states: tuple[tuple[float, int], ...]
    jitter_fraction: float = 0.05

    def __post_init__(self) -> None:
        if not self.states:
            raise ValueError("signature needs at least one state")
        if self.category in (DeviceCategory.TYPE3, DeviceCategory.TYPE4):
            raise ValueError("Type 3/4 devices are background only")
        if LABEL_CATEGORY[self.label] is not self.category:
            raise ValueError(f"{self.label.slug} must be {LABEL_CATEGORY[self.label].name}")
        if self.category is DeviceCategory.TYPE1 and len(self.states) != 1:
            raise ValueError("Type 1 signatures have exactly one active state")
        if not 0.0 <= self.jitter_fraction <= 0.5:
            raise ValueError("jitter_fraction must lie in [0, 0.5]")
        for watts, duration in self.states:
            if watts < 0:
                raise ValueError("state power must be non-negative")
            if duration <= 0 or duration % SAMPLE_INTERVAL_S:
                raise ValueError(f"state duration {duration} s is not a positive multiple of 10 s")
        if self.states[0][0] < FILTER_THRESHOLD_W:
            raise ValueError("onset state must draw at least 300 W")

    @property
    def duration_s(self) -> int:
        return sum(d for _, d in self.states)

    def profile(self, scale: float = 1.0) -> np.ndarray:
        """Per-sample power of one activation, each state multiplied by ``scale``."""
        return np.concatenate(
            [np.full(d // SAMPLE_INTERVAL_S, w * scale, dtype=float) for w, d in self.states]
        )

    def scaled(self, factor: float) -> "ApplianceSignature":
        return replace(self, states=tuple((w * factor, d) for w, d in self.states))


DEFAULT_SIGNATURES: dict[ApplianceLabel, ApplianceSignature] = {
    ApplianceLabel.KETTLE: ApplianceSignature(
        ApplianceLabel.KETTLE, DeviceCategory.TYPE1, ((2800.0, 60),)
    ),
    ApplianceLabel.TOASTER: ApplianceSignature(
        ApplianceLabel.TOASTER, DeviceCategory.TYPE1, ((1000.0, 60),)
    ),
    # magnetron duty-cycling, then the light/turntable standby tail
    ApplianceLabel.MICROWAVE: ApplianceSignature(
        ApplianceLabel.MICROWAVE,
        DeviceCategory.TYPE2,
        ((1200.0, 30), (100.0, 10), (1200.0, 20), (100.0, 30)),
    ),
    ApplianceLabel.WASHING_MACHINE: ApplianceSignature(
        ApplianceLabel.WASHING_MACHINE,
        DeviceCategory.TYPE2,
        ((400.0, 20), (2000.0, 60), (400.0, 60), (2200.0, 60)),
    ),
    ApplianceLabel.COOKER: ApplianceSignature(
        ApplianceLabel.COOKER,
        DeviceCategory.TYPE2,
        ((2500.0, 30), (500.0, 30), (2500.0, 30), (500.0, 30), (2500.0, 30), (500.0, 30)),
    ),
}


@dataclass(frozen=True)
class PowerReading:
    t: int
    watts: float


@dataclass(frozen=True)
class AggregateTrace:
    """Uniformly sampled (10 s) whole-home power series.

    ``watts[i]`` is the reading at ``t = i * 10`` seconds after ``start_epoch``.
    """

    watts: np.ndarray
    start_epoch: datetime = datetime(2020, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self) -> None:
        w = np.asarray(self.watts, dtype=float)
        if w.ndim != 1:
            raise ValueError("trace must be one-dimensional")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("trace readings must be finite and non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "watts", w)

    def __len__(self) -> int:
        return int(self.watts.size)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.watts.size, dtype=np.int64) * SAMPLE_INTERVAL_S

    @property
    def readings(self) -> list[PowerReading]:
        return [PowerReading(int(t), float(w)) for t, w in zip(self.times, self.watts)]

    def with_watts(self, watts: np.ndarray) -> "AggregateTrace":
        return AggregateTrace(watts, self.start_epoch)


@dataclass(frozen=True)
class Activation:
    label: ApplianceLabel
    start_t: int
    end_t: int


@dataclass(frozen=True)
class GroundTruthLog:
    entries: tuple[Activation, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for a in self.entries:
            if a.end_t <= a.start_t:
                raise ValueError("activation must end after it starts")
        starts = [a.start_t for a in self.entries]
        if starts != sorted(starts):
            raise ValueError("ground truth must be sorted by start_t")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


ScheduleEntry = tuple[ApplianceSignature, int]


def compose_aggregate(
    schedule: Sequence[ScheduleEntry],
    duration_s: int,
    background_watts: float = 80.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
    start_epoch: datetime = datetime(2020, 1, 1, tzinfo=timezone.utc),
) -> tuple[AggregateTrace, GroundTruthLog]:
    """Sum scheduled appliance activations on top of a noisy background.

    Each activation draws one uniform factor in ``[1 - jitter, 1 + jitter]``
    that scales all of its states. Schedule entries referring to the same
    signature object must not overlap in time.
    """
    if duration_s <= 0 or duration_s % SAMPLE_INTERVAL_S:
        raise ValueError("duration_s must be a positive multiple of 10")
    if background_watts < 0 or noise_sigma < 0:
        raise ValueError("background_watts and noise_sigma must be non-negative")

    n = duration_s // SAMPLE_INTERVAL_S
    rng = np.random.default_rng(seed)

    by_instance: dict[int, list[tuple[int, int]]] = {}
    for sig, start in schedule:
        if start < 0 or int(start) != start:
            raise ValueError(f"start_t {start} must be a non-negative whole second")
        if start + sig.duration_s > duration_s:
            raise ValueError(f"{sig.label.slug} at t={start} runs past the end of the trace")
        spans = by_instance.setdefault(id(sig), [])
        for s, e in spans:
            if start < e and s < start + sig.duration_s:
                raise ValueError(f"{sig.label.slug} scheduled twice at overlapping times")
        spans.append((start, start + sig.duration_s))

    appliance = np.zeros(n)
    entries = []
    for sig, start in schedule:
        factor = _activation_factor(seed, sig, start)
        _add_activation(appliance, sig.profile(factor), int(start))
        entries.append(Activation(sig.label, int(start), int(start) + sig.duration_s))

    base = np.full(n, float(background_watts))
    if noise_sigma > 0:
        base = base + rng.normal(0.0, noise_sigma, n)
    watts = np.maximum(base, 0.0) + appliance
    entries.sort(key=lambda a: (a.start_t, a.label))
    return AggregateTrace(watts, start_epoch), GroundTruthLog(tuple(entries))


def _add_activation(appliance: np.ndarray, profile: np.ndarray, start: int) -> None:
    """Add one activation; each reading is the mean power over its 10 s interval."""
    i0, phase = divmod(start, SAMPLE_INTERVAL_S)
    if phase == 0:
        appliance[i0 : i0 + profile.size] += profile
        return
    # switch-on part-way through a sample splits each state over two readings
    lead = (SAMPLE_INTERVAL_S - phase) / SAMPLE_INTERVAL_S
    appliance[i0 : i0 + profile.size] += lead * profile
    appliance[i0 + 1 : i0 + 1 + profile.size] += (1.0 - lead) * profile


def _activation_factor(seed: int, sig: ApplianceSignature, start: int) -> float:
    # keyed on the activation, not its schedule position, so sub-schedules
    # reproduce the same draws
    if sig.jitter_fraction == 0:
        return 1.0
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), int(sig.label), int(start)])
    u = np.random.default_rng(ss).uniform(-1.0, 1.0)
    return 1.0 + sig.jitter_fraction * u


@dataclass(frozen=True)
class LabeledWindow:
    label: ApplianceLabel
    home: int
    start_t: int
    readings: np.ndarray


@dataclass(frozen=True)
class WindowCorpus:
    windows: tuple[LabeledWindow, ...]
    window_len: int

    def counts(self) -> dict[ApplianceLabel, int]:
        out = {label: 0 for label in ApplianceLabel}
        for w in self.windows:
            out[w.label] += 1
        return out

    @property
    def n_readings(self) -> int:
        return len(self.windows) * self.window_len


def home_signatures(
    home_rng: np.random.Generator,
    home_variance: float,
    base: dict[ApplianceLabel, ApplianceSignature] | None = None,
) -> dict[ApplianceLabel, ApplianceSignature]:
    """Re-rate every nominal signature by one per-home factor (manufacturer spread)."""
    base = DEFAULT_SIGNATURES if base is None else base
    out = {}
    for label in ApplianceLabel:
        factor = home_rng.uniform(1 - home_variance, 1 + home_variance)
        out[label] = base[label].scaled(factor)
    return out


def synth_dataset(
    homes: int = 3,
    samples_per_home_per_label: int = 25,
    window_len: int = 6,
    seed: int = 0,
    *,
    background_watts: float = 80.0,
    noise_sigma: float = 30.0,
    home_variance: float = 0.20,
    gap_s: int = 120,
    threshold_watts: float = FILTER_THRESHOLD_W,
) -> WindowCorpus:
    """Labeled event windows recorded from simulated homes.

    Every home gets its own re-rated appliances and one long trace in which
    each appliance is switched on ``samples_per_home_per_label`` times, in
    shuffled order with idle gaps. The trace goes through the same
    filter/event-detection path used at prediction time, and each detected
    window is labeled from the ground-truth log.
    """
    # local import: preprocess depends on this module
    from .preprocess import detect_events, highpass_filter

    if homes < 1 or samples_per_home_per_label < 1:
        raise ValueError("homes and samples_per_home_per_label must be positive")
    if window_len < 2:
        raise ValueError("window_len must be at least 2")

    root = np.random.default_rng(seed)
    home_seeds = root.integers(0, 2**63 - 1, size=homes)
    windows: list[LabeledWindow] = []
    for home in range(homes):
        rng = np.random.default_rng(int(home_seeds[home]))
        sigs = home_signatures(rng, home_variance)
        order = np.repeat(np.arange(len(ApplianceLabel)), samples_per_home_per_label)
        rng.shuffle(order)
        schedule: list[ScheduleEntry] = []
        t = gap_s
        for code in order:
            sig = sigs[ApplianceLabel(int(code))]
            schedule.append((sig, t))
            span = max(sig.duration_s, window_len * SAMPLE_INTERVAL_S)
            # onsets fall anywhere within a sample, as with a free-running meter
            t += span + gap_s + int(rng.integers(0, 60))
        total = -(-(t + SAMPLE_INTERVAL_S) // SAMPLE_INTERVAL_S) * SAMPLE_INTERVAL_S
        trace, truth = compose_aggregate(
            schedule, total, background_watts, noise_sigma, seed=int(rng.integers(0, 2**63 - 1))
        )
        events = detect_events(highpass_filter(trace, threshold_watts), window_len)
        if len(events) != len(truth):
            raise RuntimeError(
                f"home {home}: detected {len(events)} events for {len(truth)} activations"
            )
        for ev, act in zip(events, truth):
            if abs(ev.start_t - act.start_t) > SAMPLE_INTERVAL_S:
                raise RuntimeError(f"home {home}: event at {ev.start_t} does not match {act}")
            windows.append(LabeledWindow(act.label, home, ev.start_t, ev.readings))
    windows.sort(key=lambda w: (w.label, w.home, w.start_t))
    return WindowCorpus(tuple(windows), window_len)


def routine_day_schedule(
    seed: int = 0, sigs: dict[ApplianceLabel, ApplianceSignature] | None = None
) -> list[ScheduleEntry]:
    """One ordinary day of appliance use (used for the demo day trace)."""
    sigs = DEFAULT_SIGNATURES if sigs is None else sigs
    rng = np.random.default_rng(seed)

    def at(hour: float, spread_min: int = 20) -> int:
        minute = hour * 60 + int(rng.integers(-spread_min, spread_min + 1))
        return int(minute * 60)

    plan = [
        (ApplianceLabel.KETTLE, 7.25),
        (ApplianceLabel.TOASTER, 7.6),
        (ApplianceLabel.WASHING_MACHINE, 10.0),
        (ApplianceLabel.KETTLE, 11.0),
        (ApplianceLabel.MICROWAVE, 12.5),
        (ApplianceLabel.KETTLE, 15.5),
        (ApplianceLabel.COOKER, 18.0),
    ]
    return [(sigs[label], at(hour)) for label, hour in plan]
