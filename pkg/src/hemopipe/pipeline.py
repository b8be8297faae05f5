"""Stage orchestration: frames -> drift-corrected NIR -> hemoglobin changes -> features."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .beer_lambert import DEFAULT_LOG_BASE, invert_concentrations, optical_density_delta
from .core import ExtinctionTable, InsufficientDataError, Led, SessionPlan, as_columns
from .drift import DriftFit, NirChannel, correct_channel, interpolate_y
from .dsp import DEFAULT_CUTOFF_HZ, NIR_RATE_HZ, FourChannelSeries, lowpass_series, segment
from .features import FeatureVector, build_dataset
from .simulator import SimConfig, emit_columns, simulate_hemo

log = logging.getLogger(__name__)

DRIFT_CHOICES = ("auto", "on", "off")


@dataclass(frozen=True)
class Processed:
    raw: FourChannelSeries  # before low-pass
    series: FourChannelSeries  # after low-pass (same as raw when filtering is off)
    dd_l1: np.ndarray
    dd_l2: np.ndarray
    fits: tuple[DriftFit, ...]


def process(frames, table: ExtinctionTable, drift: str = "auto",
            cutoff_hz: float | None = DEFAULT_CUTOFF_HZ, log_base: str = DEFAULT_LOG_BASE,
            sample_rate_hz: float = NIR_RATE_HZ, drift_model: str = "affine") -> Processed:
    """Turn a frame stream into the four-channel (ir1, ir2, dHbO2, dHb) series.

    ``drift="auto"`` corrects drift unless the Y channel is exactly constant.
    Optical-density changes are taken against the first NIR sample.
    """
    if drift not in DRIFT_CHOICES:
        raise ValueError(f"drift must be one of {DRIFT_CHOICES}")
    cols = as_columns(frames)
    white = cols.select(Led.WHITE)
    nir = cols.select(Led.NIR)
    if len(nir) < 2:
        raise InsufficientDataError(f"need at least 2 NIR frames, got {len(nir)}")
    ir1, ir2 = nir.ir1, nir.ir2
    fits: tuple[DriftFit, ...] = ()
    do_drift = drift == "on"
    if drift == "auto":
        do_drift = len(white) >= 2 and np.ptp(white.y) > 0
    if do_drift:
        y_interp = interpolate_y(white.t, white.y, nir.t)
        ir1, fit1 = correct_channel(ir1, y_interp, NirChannel.IR1, drift_model)
        ir2, fit2 = correct_channel(ir2, y_interp, NirChannel.IR2, drift_model)
        fits = (fit1, fit2)
        log.debug("drift fits: %s", fits)
    dd1 = np.asarray(optical_density_delta(ir1[0], ir1, log_base))
    dd2 = np.asarray(optical_density_delta(ir2[0], ir2, log_base))
    c_hbo2, c_hb = invert_concentrations(dd1, dd2, table)
    raw = FourChannelSeries(nir.t, ir1, ir2, c_hbo2, c_hb, sample_rate_hz=sample_rate_hz)
    series = raw if cutoff_hz is None else lowpass_series(raw, cutoff_hz)
    return Processed(raw, series, dd1, dd2, fits)


def windows_to_dataset(series: FourChannelSeries, plan: SessionPlan, subject_id: str) -> list[FeatureVector]:
    return build_dataset(segment(series, plan), subject_id)


def simulate_subject(config: SimConfig, subject_id: str = "S0") -> list[FeatureVector]:
    """Simulate one session and return its labelled feature vectors."""
    cols = emit_columns(config, simulate_hemo(config))
    processed = process(cols, config.table, log_base=config.log_base)
    return windows_to_dataset(processed.series, config.plan, subject_id)


def subject_seed(seed: int, index: int) -> int:
    """Independent per-subject seed derived from a run seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])
