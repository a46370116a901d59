"""Highpass filtering, event detection, spectral features and Min-Max scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fft import is_power_of_two, radix2_fft
from .signal_model import FILTER_THRESHOLD_W, SAMPLE_INTERVAL_S, AggregateTrace


@dataclass(frozen=True)
class EventWindow:
    start_t: int
    readings: np.ndarray


@dataclass(frozen=True)
class FeatureVector:
    magnitudes: np.ndarray
    source_start_t: int


def highpass_filter(trace: AggregateTrace, threshold_watts: float = FILTER_THRESHOLD_W) -> AggregateTrace:
    """Zero every reading strictly below ``threshold_watts``; the rest pass unchanged."""
    if threshold_watts < 0:
        raise ValueError("threshold_watts must be non-negative")
    w = trace.watts
    return trace.with_watts(np.where(w >= threshold_watts, w, 0.0))


def detect_events(trace: AggregateTrace, window_len: int = 6) -> list[EventWindow]:
    """Rising-edge event detection on a filtered trace.

    An event opens at a nonzero reading that follows a zero (or the trace
    start) and captures the next ``window_len`` readings, zero-padded past the
    end. Onsets whose nonzero run is shorter than ``window_len / 2`` are glitches
    and are dropped; no new event can open inside an accepted window.
    """
    if window_len < 1:
        raise ValueError("window_len must be positive")
    w = trace.watts
    n = w.size
    events: list[EventWindow] = []
    i = 0
    while i < n:
        if w[i] > 0 and (i == 0 or w[i - 1] == 0):
            run = 1
            while i + run < n and w[i + run] > 0:
                run += 1
            if run < window_len / 2:
                i += run
                continue
            win = np.zeros(window_len)
            chunk = w[i : i + window_len]
            win[: chunk.size] = chunk
            events.append(EventWindow(i * SAMPLE_INTERVAL_S, win))
            i += window_len
        else:
            i += 1
    return events


def fft_features(window: EventWindow, padded_len: int = 8) -> FeatureVector:
    """Magnitudes of the first ``padded_len // 2 + 1`` DFT bins of the zero-padded window."""
    readings = np.asarray(window.readings, dtype=float)
    if not is_power_of_two(padded_len):
        raise ValueError(f"padded_len must be a power of two, got {padded_len}")
    if padded_len < readings.size:
        raise ValueError(f"padded_len {padded_len} is shorter than the window ({readings.size})")
    padded = np.zeros(padded_len)
    padded[: readings.size] = readings
    spectrum = radix2_fft(padded)
    return FeatureVector(np.abs(spectrum[: padded_len // 2 + 1]), window.start_t)


def feature_matrix(vectors: list[FeatureVector]) -> np.ndarray:
    return np.vstack([v.magnitudes for v in vectors])


def minmax_normalize(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Scale each column to [0, 1]; returns the scaled matrix and a ``(d, 2)`` array of (min, max).

    Constant columns map to 0.
    """
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a 2-D matrix with at least one row")
    bounds = np.column_stack([X.min(axis=0), X.max(axis=0)])
    return apply_minmax(X, bounds, clip=False), bounds


def apply_minmax(matrix, bounds, clip: bool = True) -> np.ndarray:
    """Apply stored (min, max) pairs; values outside the training range are clamped when ``clip``."""
    X = np.asarray(matrix, dtype=float)
    bounds = np.asarray(bounds, dtype=float)
    if X.shape[-1] != bounds.shape[0]:
        raise ValueError(f"expected {bounds.shape[0]} columns, got {X.shape[-1]}")
    lo, hi = bounds[:, 0], bounds[:, 1]
    span = hi - lo
    degenerate = span == 0
    out = (X - lo) / np.where(degenerate, 1.0, span)
    out = np.where(degenerate, 0.0, out)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out


def trace_features(
    trace: AggregateTrace,
    threshold_watts: float = FILTER_THRESHOLD_W,
    window_len: int = 6,
    padded_len: int = 8,
) -> list[FeatureVector]:
    """Filter -> detect -> FFT for a whole trace (normalization is left to the caller)."""
    events = detect_events(highpass_filter(trace, threshold_watts), window_len)
    return [fft_features(e, padded_len) for e in events]
