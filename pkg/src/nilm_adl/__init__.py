"""Non-intrusive appliance monitoring: synthetic whole-home traces, event detection,
spectral features, classifiers, daily-routine analysis and similarity layouts."""

from .signal_model import (
    DEFAULT_SIGNATURES,
    AggregateTrace,
    ApplianceLabel,
    ApplianceSignature,
    DeviceCategory,
    GroundTruthLog,
    compose_aggregate,
    synth_dataset,
)
from .preprocess import (
    EventWindow,
    FeatureVector,
    apply_minmax,
    detect_events,
    fft_features,
    highpass_filter,
    minmax_normalize,
)
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SIGNATURES",
    "AggregateTrace",
    "ApplianceLabel",
    "ApplianceSignature",
    "DeviceCategory",
    "EventWindow",
    "FeatureVector",
    "GroundTruthLog",
    "RunConfig",
    "apply_minmax",
    "compose_aggregate",
    "detect_events",
    "fft_features",
    "highpass_filter",
    "minmax_normalize",
    "synth_dataset",
]
