"""Resting-drift removal: regress each NIR channel on the interpolated white-light Y channel."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import HemopipeError, InsufficientDataError


class DegenerateRegressorError(HemopipeError, ValueError):
    code = "degenerate-regressor"


class NirChannel(enum.Enum):
    IR1 = "ir1"
    IR2 = "ir2"


@dataclass(frozen=True)
class DriftFit:
    slope: float
    intercept: float
    r_squared: float
    channel: NirChannel = NirChannel.IR1

    def predict(self, y_interp):
        return self.slope * np.asarray(y_interp, dtype=float) + self.intercept


def interpolate_y(y_times, y_values, target_times) -> np.ndarray:
    """Piecewise-linear Y at ``target_times``, clamped to the end values outside the sampled range."""
    yt = np.asarray(y_times, dtype=float)
    yv = np.asarray(y_values, dtype=float)
    if yt.shape != yv.shape or yt.ndim != 1:
        raise ValueError("y_times and y_values must be 1-D and the same length")
    if yt.size < 2:
        raise InsufficientDataError(f"need at least 2 Y samples, got {yt.size}")
    if np.any(np.diff(yt) <= 0):
        raise ValueError("y_times must be strictly increasing")
    # np.interp clamps to the endpoint values by default
    return np.interp(np.asarray(target_times, dtype=float), yt, yv)


def fit_drift(ir, y_interp, channel: NirChannel = NirChannel.IR1) -> DriftFit:
    """Ordinary least squares ``ir ~ slope * y_interp + intercept``."""
    ir = np.asarray(ir, dtype=float)
    y = np.asarray(y_interp, dtype=float)
    if ir.shape != y.shape or ir.ndim != 1:
        raise ValueError("ir and y_interp must be 1-D and the same length")
    if ir.size < 3:
        raise InsufficientDataError(f"need at least 3 samples, got {ir.size}")
    yc = y - y.mean()
    sxx = float(np.dot(yc, yc))
    if sxx == 0.0 or np.ptp(y) <= 1e-12 * np.max(np.abs(y)):
        raise DegenerateRegressorError("y_interp is constant")
    ir_mean = ir.mean()
    irc = ir - ir_mean
    slope = float(np.dot(yc, irc)) / sxx
    intercept = float(ir_mean - slope * y.mean())
    resid = ir - (slope * y + intercept)
    sst = float(np.dot(irc, irc))
    if sst == 0.0:
        r2 = 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - float(np.dot(resid, resid)) / sst))
    return DriftFit(slope, intercept, r2, channel)


def remove_drift(ir, y_interp, channel: NirChannel = NirChannel.IR1) -> np.ndarray:
    """Residual of ``ir`` after removing its linear dependence on ``y_interp``."""
    fit = fit_drift(ir, y_interp, channel)
    return np.asarray(ir, dtype=float) - fit.predict(y_interp)


def fit_drift_proportional(ir, y_interp, channel: NirChannel = NirChannel.IR1) -> DriftFit:
    """Least squares through the origin, ``ir ~ slope * y_interp``.

    Unlike the affine fit this cannot absorb a linear time trend of the signal
    itself, only its mean level.
    """
    ir = np.asarray(ir, dtype=float)
    y = np.asarray(y_interp, dtype=float)
    if ir.shape != y.shape or ir.ndim != 1:
        raise ValueError("ir and y_interp must be 1-D and the same length")
    if ir.size < 3:
        raise InsufficientDataError(f"need at least 3 samples, got {ir.size}")
    syy = float(np.dot(y, y))
    if syy == 0.0:
        raise DegenerateRegressorError("y_interp is identically zero")
    slope = float(np.dot(y, ir)) / syy
    resid = ir - slope * y
    irc = ir - ir.mean()
    sst = float(np.dot(irc, irc))
    r2 = 0.0 if sst == 0.0 else min(1.0, max(0.0, 1.0 - float(np.dot(resid, resid)) / sst))
    return DriftFit(slope, 0.0, r2, channel)


DRIFT_MODELS = {"affine": fit_drift, "proportional": fit_drift_proportional}


def correct_channel(ir, y_interp, channel: NirChannel = NirChannel.IR1,
                    model: str = "affine") -> tuple[np.ndarray, DriftFit]:
    """Drift-free intensities: residuals re-anchored at the fitted value of the first sample.

    The result stays in count units so it can feed the optical-density step.
    """
    if model not in DRIFT_MODELS:
        raise ValueError(f"drift model must be one of {sorted(DRIFT_MODELS)}")
    fit = DRIFT_MODELS[model](ir, y_interp, channel)
    fitted = fit.predict(y_interp)
    resid = np.asarray(ir, dtype=float) - fitted
    anchor = float(fitted[0])
    if not (anchor > 0 and math.isfinite(anchor)):
        raise DegenerateRegressorError(f"{channel.value}: fitted baseline {anchor!r} is not positive")
    return resid + anchor, fit
