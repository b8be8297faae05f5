"""Fixed 56-value feature vectors (4 channels x 14 statistics) per window."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FrameValidationError, Label
from .dsp import SERIES_CHANNELS, Window

STATISTICS = (
    "mean",
    "variance",
    "std",
    "min",
    "max",
    "median",
    "range",
    "skewness",
    "kurtosis",
    "slope",
    "abs_energy",
    "mean_abs_change",
    "zero_crossings",
    "delta",
)

FEATURE_NAMES = tuple(f"{ch}__{stat}" for ch in SERIES_CHANNELS for stat in STATISTICS)
N_FEATURES = len(FEATURE_NAMES)

# relative size below which a window is treated as constant
_DEGENERATE_RTOL = 1e-10


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: Label
    subject_id: str = ""
    window_start_t: float = 0.0
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "names", tuple(self.names))
        if self.values.shape != (len(self.names),):
            raise ValueError(f"expected {len(self.names)} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            bad = self.names[int(np.flatnonzero(~np.isfinite(self.values))[0])]
            raise FrameValidationError(bad, "non-finite")


def channel_statistics(x: np.ndarray) -> np.ndarray:
    """Statistics for each row of ``x`` (shape (m, n)); returns shape (m, 14) in STATISTICS order."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    m2 = np.mean(centered**2, axis=1)
    m3 = np.mean(centered**3, axis=1)
    m4 = np.mean(centered**4, axis=1)
    scale = np.max(np.abs(x), axis=1)
    flat = np.sqrt(m2) <= _DEGENERATE_RTOL * scale
    safe_m2 = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe_m2**1.5)
    kurt = np.where(flat, 0.0, m4 / safe_m2**2 - 3.0)

    k = np.arange(n, dtype=float)
    kc = k - k.mean()
    slope = centered @ kc / np.dot(kc, kc) if n > 1 else np.zeros(m)

    diffs = np.diff(x, axis=1)
    mac = np.mean(np.abs(diffs), axis=1) if n > 1 else np.zeros(m)

    # zeros count as positive; a constant window has no crossings
    positive = centered >= 0
    crossings = np.count_nonzero(positive[:, 1:] != positive[:, :-1], axis=1).astype(float)
    crossings[flat] = 0.0

    xmin = x.min(axis=1)
    xmax = x.max(axis=1)
    return np.column_stack([
        mean,
        m2,
        np.sqrt(m2),
        xmin,
        xmax,
        np.median(x, axis=1),
        xmax - xmin,
        skew,
        kurt,
        slope,
        np.sum(x * x, axis=1),
        mac,
        crossings,
        x[:, -1] - x[:, 0],
    ])


def _check_finite(block: np.ndarray):
    finite = np.isfinite(block).all(axis=(0, 1))
    if not finite.all():
        raise FrameValidationError(SERIES_CHANNELS[int(np.argmin(finite))], "non-finite")


def feature_matrix(windows: Sequence[Window]) -> np.ndarray:
    """(len(windows), 56) feature matrix; windows must share one length."""
    if not windows:
        return np.empty((0, N_FEATURES))
    block = np.stack([w.frames.channel_matrix() for w in windows])  # (m, n, 4)
    _check_finite(block)
    return np.concatenate([channel_statistics(block[:, :, c]) for c in range(block.shape[2])], axis=1)


def extract(window: Window, subject_id: str = "") -> FeatureVector:
    return FeatureVector(feature_matrix([window])[0], window.label, subject_id, window.start_t)


def build_dataset(windows: Sequence[Window], subject_id: str) -> list[FeatureVector]:
    values = feature_matrix(windows)
    return [
        FeatureVector(row, w.label, subject_id, w.start_t) for row, w in zip(values, windows)
    ]


def as_arrays(dataset: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a dataset into ``(X, y)``."""
    if not dataset:
        return np.empty((0, N_FEATURES)), np.empty(0, dtype=int)
    X = np.stack([fv.values for fv in dataset])
    y = np.array([int(fv.label) for fv in dataset], dtype=int)
    return X, y
