"""Run configuration: every pipeline default in one JSON document, validated on load."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .behaviour import DEFAULT_WINDOWS, ObservationWindow, validate_windows
from .classify import ForestParams, Kernel, ModelSpec
from .fft import is_power_of_two
from .signal_model import FILTER_THRESHOLD_W


class ConfigError(ValueError):
    """Invalid or unreadable configuration (exit code 1)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (exit code 2)."""


@dataclass(frozen=True)
class SynthSection:
    homes: int = 3
    samples_per_home: int = 25
    background_watts: float = 80.0
    noise_sigma: float = 30.0
    home_variance: float = 0.20
    gap_s: int = 120
    day_noise_sigma: float = 0.0  # noise on the demo day trace


@dataclass(frozen=True)
class PreprocessSection:
    threshold_watts: float = FILTER_THRESHOLD_W
    window_len: int = 6
    padded_len: int = 8

    @property
    def n_features(self) -> int:
        return self.padded_len // 2 + 1


@dataclass(frozen=True)
class FeatureSection:
    top_k: int = 3


@dataclass(frozen=True)
class ForestSection:
    num_trees: int = 32
    max_internal_nodes: int = 128
    min_samples_leaf: int = 1
    bag_fraction: float = 1.0
    max_features: int | None = None


@dataclass(frozen=True)
class SvmSection:
    kernel: str = "poly"
    degree: int = 2
    gamma: float = 1.0
    coef0: float = 1.0
    C: float = 1.0
    tol: float = 1e-3


@dataclass(frozen=True)
class EvaluationSection:
    folds: int = 10


@dataclass(frozen=True)
class BehaviourSection:
    z_threshold: float = 3.0
    windows: tuple[tuple[str, int, int], ...] = tuple(
        (w.name, w.start_minute, w.end_minute) for w in DEFAULT_WINDOWS
    )

    def observation_windows(self) -> tuple[ObservationWindow, ...]:
        return tuple(ObservationWindow(n, s, e) for n, s, e in self.windows)


@dataclass(frozen=True)
class LayoutSection:
    neighbours: int = 5
    spring_k: float = 1.0
    tol: float = 1e-3
    min_size: int = 10
    ratio_p: float = 0.75
    theta: float = 1.2
    max_iter: int = 500
    svg: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SynthSection = field(default_factory=SynthSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    features: FeatureSection = field(default_factory=FeatureSection)
    forest: ForestSection = field(default_factory=ForestSection)
    svm: SvmSection = field(default_factory=SvmSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    behaviour: BehaviourSection = field(default_factory=BehaviourSection)
    layout: LayoutSection = field(default_factory=LayoutSection)

    def __post_init__(self) -> None:
        validate(self)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["behaviour"]["windows"] = [
            {"name": n, "start_minute": s, "end_minute": e} for n, s, e in self.behaviour.windows
        ]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def forest_params(self) -> ForestParams:
        f = self.forest
        return ForestParams(
            num_trees=f.num_trees,
            max_internal_nodes=f.max_internal_nodes,
            min_samples_leaf=f.min_samples_leaf,
            bag_fraction=f.bag_fraction,
            max_features=f.max_features,
            seed=self.seed,
        )

    def kernel(self) -> Kernel:
        s = self.svm
        return Kernel(s.kernel, s.degree, s.gamma, s.coef0)

    def model_spec(self, model: str, selector: str) -> ModelSpec:
        return ModelSpec(
            model=model,
            selector=selector,
            top_k=self.features.top_k,
            forest=self.forest_params(),
            kernel=self.kernel(),
            C=self.svm.C,
            svm_tol=self.svm.tol,
        )


_SECTIONS = {
    "synth": SynthSection,
    "preprocess": PreprocessSection,
    "features": FeatureSection,
    "forest": ForestSection,
    "svm": SvmSection,
    "evaluation": EvaluationSection,
    "behaviour": BehaviourSection,
    "layout": LayoutSection,
}


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(cfg: RunConfig) -> None:
    s, p, f, sv, b, lay = cfg.synth, cfg.preprocess, cfg.forest, cfg.svm, cfg.behaviour, cfg.layout
    _check(cfg.seed >= 0, "seed must be non-negative")
    _check(s.homes >= 1 and s.samples_per_home >= 1, "synth.homes and synth.samples_per_home must be >= 1")
    _check(s.background_watts >= 0 and s.noise_sigma >= 0 and s.day_noise_sigma >= 0, "synth power levels must be >= 0")
    _check(0 <= s.home_variance < 1, "synth.home_variance must lie in [0, 1)")
    _check(s.gap_s >= 0, "synth.gap_s must be >= 0")
    _check(p.threshold_watts >= 0, "preprocess.threshold_watts must be >= 0")
    _check(p.window_len >= 2, "preprocess.window_len must be >= 2")
    _check(is_power_of_two(p.padded_len), "preprocess.padded_len must be a power of two")
    _check(p.padded_len >= p.window_len, "preprocess.padded_len must be >= window_len")
    _check(1 <= cfg.features.top_k <= p.n_features, f"features.top_k must lie in [1, {p.n_features}]")
    _check(f.num_trees >= 1 and f.max_internal_nodes >= 1, "forest sizes must be >= 1")
    _check(f.min_samples_leaf >= 1, "forest.min_samples_leaf must be >= 1")
    _check(0 < f.bag_fraction <= 1, "forest.bag_fraction must lie in (0, 1]")
    _check(f.max_features is None or f.max_features >= 1, "forest.max_features must be >= 1 or null")
    _check(sv.kernel in ("poly", "linear"), "svm.kernel must be 'poly' or 'linear'")
    _check(sv.degree >= 1, "svm.degree must be >= 1")
    _check(sv.C > 0 and sv.tol > 0, "svm.C and svm.tol must be positive")
    _check(cfg.evaluation.folds >= 2, "evaluation.folds must be >= 2")
    _check(b.z_threshold >= 0, "behaviour.z_threshold must be >= 0")
    try:
        validate_windows(b.observation_windows())
    except ValueError as exc:
        raise ConfigError(f"behaviour.windows: {exc}") from None
    _check(lay.neighbours >= 1, "layout.neighbours must be >= 1")
    _check(lay.spring_k > 0 and lay.tol > 0, "layout.spring_k and layout.tol must be positive")
    _check(lay.min_size >= 2, "layout.min_size must be >= 2")
    _check(0 < lay.ratio_p <= 1, "layout.ratio_p must lie in (0, 1]")
    _check(lay.theta >= 0, "layout.theta must be >= 0")
    _check(lay.max_iter >= 1, "layout.max_iter must be >= 1")


def _coerce(cls, name: str, key: str, value):
    """Type-check one field value against the dataclass default's type."""
    default = {f.name: f for f in dataclasses.fields(cls)}[key].default
    if key == "windows":
        try:
            return tuple((str(w["name"]), int(w["start_minute"]), int(w["end_minute"])) for w in value)
        except (TypeError, KeyError, ValueError):
            raise ConfigError(f"{name}.windows must be a list of {{name, start_minute, end_minute}}") from None
    if key == "max_features":
        if value is None:
            return None
        default = 0
    if isinstance(default, bool):
        _check(isinstance(value, bool), f"{name}.{key} must be true or false")
        return value
    if isinstance(default, int):
        _check(isinstance(value, int) and not isinstance(value, bool), f"{name}.{key} must be an integer")
        return value
    if isinstance(default, float):
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), f"{name}.{key} must be a number")
        return float(value)
    if isinstance(default, str):
        _check(isinstance(value, str), f"{name}.{key} must be a string")
        return value
    return value


def from_dict(doc: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay ``doc`` on ``base`` (defaults when omitted); unknown keys are errors."""
    base = RunConfig() if base is None else base
    _check(isinstance(doc, dict), "config document must be a JSON object")
    changes = {}
    for key, value in doc.items():
        if key == "seed":
            _check(isinstance(value, int) and not isinstance(value, bool), "seed must be an integer")
            changes["seed"] = value
            continue
        cls = _SECTIONS.get(key)
        _check(cls is not None, f"unknown config key {key!r}")
        _check(isinstance(value, dict), f"config section {key!r} must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        sub = {}
        for k, v in value.items():
            _check(k in known, f"unknown config key {key}.{k}")
            sub[k] = _coerce(cls, key, k, v)
        changes[key] = dataclasses.replace(getattr(base, key), **sub)
    try:
        return dataclasses.replace(base, **changes)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return from_dict(doc)


def apply_overrides(cfg: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply ``section.key=value`` strings; values are parsed as JSON, falling back to text."""
    doc: dict = {}
    for item in assignments:
        key, sep, raw = item.partition("=")
        _check(bool(sep), f"override {item!r} must look like section.key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        if parts == ["seed"]:
            doc["seed"] = value
            continue
        _check(len(parts) == 2, f"override key {key!r} must be section.key")
        doc.setdefault(parts[0], {})[parts[1]] = value
    merged = cfg.to_dict()
    for k, v in doc.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k].update(v)
        else:
            merged[k] = v
    return from_dict(merged)
