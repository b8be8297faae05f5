"""Synthetic sensor sessions with known hemodynamic ground truth.

A first-order lag drives (dHbO2, dHb) toward the target of the active plan
segment; the forward Beer-Lambert model turns that into NIR intensities, and the
LED duty cycle, multiplicative drift and Gaussian read noise are layered on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .beer_lambert import DEFAULT_LOG_BASE, default_table, forward_density, intensity_from_density
from .core import (
    CHANNELS,
    ExtinctionTable,
    FrameColumns,
    HemoSample,
    Label,
    Led,
    SensorFrame,
    SessionPlan,
)

CYCLE_S = 1.0
SETTLE_S = 0.1
NIR_PER_CYCLE = 7
NIR_SLOT_S = (CYCLE_S - SETTLE_S) / NIR_PER_CYCLE

DRIFT_MODES = ("none", "linear", "exponential")

DEFAULT_BASELINE = {"x": 18000.0, "y": 20000.0, "z": 15000.0, "ir1": 20000.0, "ir2": 20000.0}
DEFAULT_TARGETS = {
    Label.REST: (0.0, 0.0),
    Label.LOW_LOAD: (0.010, -0.004),
    Label.HIGH_LOAD: (0.025, -0.010),
}


@dataclass(frozen=True)
class DriftConfig:
    mode: str = "none"
    magnitude_per_hour: float = 0.0
    # per-channel multipliers of the magnitude; None means one drift shared by all channels
    channel_scale: dict[str, float] | None = None

    def __post_init__(self):
        if self.mode not in DRIFT_MODES:
            raise ValueError(f"drift mode must be one of {DRIFT_MODES}")
        if not 0.0 <= self.magnitude_per_hour < 1.0:
            raise ValueError("drift magnitude must be a fraction in [0, 1)")
        if self.channel_scale is not None:
            unknown = set(self.channel_scale) - set(CHANNELS)
            if unknown:
                raise ValueError(f"unknown drift channels {sorted(unknown)}")

    def factor(self, t, channel: str | None = None) -> np.ndarray:
        """Multiplicative drift at times ``t``; exactly 1 at t = 0."""
        t = np.asarray(t, dtype=float)
        m = self.magnitude_per_hour
        if self.channel_scale is not None and channel is not None:
            m *= self.channel_scale.get(channel, 1.0)
        hours = t / 3600.0
        if self.mode == "none" or m == 0.0:
            return np.ones_like(t)
        if self.mode == "linear":
            return np.maximum(1.0 - m * hours, 1e-6)
        return np.power(1.0 - m, hours)


@dataclass(frozen=True)
class SimConfig:
    plan: SessionPlan = field(default_factory=SessionPlan.default)
    table: ExtinctionTable = field(default_factory=default_table)
    baseline: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BASELINE))
    state_targets: dict[Label, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_TARGETS))
    transition_tau_s: float = 20.0
    drift: DriftConfig = field(default_factory=DriftConfig)
    noise_sigma: float = 0.0
    seed: int = 0
    log_base: str = DEFAULT_LOG_BASE

    def __post_init__(self):
        missing = set(CHANNELS) - set(self.baseline)
        if missing:
            raise ValueError(f"baseline intensity missing for {sorted(missing)}")
        if any(not v > 0 for v in self.baseline.values()):
            raise ValueError("baseline intensities must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")
        if not self.transition_tau_s > 0:
            raise ValueError("transition_tau_s must be positive")
        object.__setattr__(
            self, "state_targets",
            {Label.parse(k): (float(v[0]), float(v[1])) for k, v in self.state_targets.items()},
        )
        for label, _ in self.plan.segments:
            if label not in self.state_targets:
                raise ValueError(f"no state target for {label.name}")

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)

    def to_json(self) -> dict:
        t = self.table
        return {
            "plan": self.plan.to_json(),
            "table": {k: getattr(t, k) for k in
                      ("eps_hbo2_l1", "eps_hb_l1", "eps_hbo2_l2", "eps_hb_l2", "path_length_cm")},
            "baseline": dict(self.baseline),
            "state_targets": {lab.name: list(v) for lab, v in sorted(self.state_targets.items())},
            "transition_tau_s": self.transition_tau_s,
            "drift": {
                "mode": self.drift.mode,
                "magnitude_per_hour": self.drift.magnitude_per_hour,
                "channel_scale": self.drift.channel_scale,
            },
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "log_base": self.log_base,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        known = {"plan", "table", "baseline", "state_targets", "transition_tau_s",
                 "drift", "noise_sigma", "seed", "log_base"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown simulator config keys {sorted(unknown)}")
        kw = {}
        if "plan" in obj:
            kw["plan"] = SessionPlan.from_json(obj["plan"])
        if "table" in obj:
            kw["table"] = ExtinctionTable(**obj["table"])
        if "baseline" in obj:
            kw["baseline"] = {**DEFAULT_BASELINE, **{k: float(v) for k, v in obj["baseline"].items()}}
        if "state_targets" in obj:
            kw["state_targets"] = {Label.parse(k): tuple(v) for k, v in obj["state_targets"].items()}
        if "drift" in obj:
            kw["drift"] = DriftConfig(**obj["drift"])
        for key in ("transition_tau_s", "noise_sigma"):
            if key in obj:
                kw[key] = float(obj[key])
        if "seed" in obj:
            kw["seed"] = int(obj["seed"])
        if "log_base" in obj:
            kw["log_base"] = obj["log_base"]
        return cls(**kw)


@dataclass(frozen=True)
class HemoSeries:
    t: np.ndarray
    dd_l1: np.ndarray
    dd_l2: np.ndarray
    d_chbo2: np.ndarray
    d_chb: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    def samples(self) -> list[HemoSample]:
        return [HemoSample(*row) for row in zip(self.t.tolist(), self.dd_l1.tolist(), self.dd_l2.tolist(),
                                                 self.d_chbo2.tolist(), self.d_chb.tolist())]


def n_cycles(plan: SessionPlan) -> int:
    return int(math.ceil(plan.total_duration / CYCLE_S - 1e-9))


def cycle_times(plan: SessionPlan) -> tuple[np.ndarray, np.ndarray]:
    """White-read and NIR-read timestamps.

    Each cycle reads white light after the settle delay, then splits the rest of the
    cycle into seven slots and reads NIR at the end of each slot.
    """
    starts = np.arange(n_cycles(plan), dtype=float) * CYCLE_S
    white = starts + SETTLE_S
    offsets = SETTLE_S + NIR_SLOT_S * np.arange(1, NIR_PER_CYCLE + 1)
    nir = (starts[:, None] + offsets[None, :]).ravel()
    return white, nir


def lag_response(plan: SessionPlan, targets: dict, tau: float, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form first-order lag toward each segment's target, starting from zero at t = 0.

    Times past the end of the plan continue in the last segment.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((2, t.size))
    state = np.zeros(2)
    bounds = plan.boundaries
    for i, (label, duration) in enumerate(plan.segments):
        t0 = bounds[i]
        t1 = t0 + duration if i + 1 < len(plan.segments) else math.inf
        target = np.asarray(targets[label], dtype=float)
        mask = (t >= t0) & (t < t1)
        decay = np.exp(-(t[mask] - t0) / tau)
        out[:, mask] = target[:, None] + (state - target)[:, None] * decay[None, :]
        if math.isfinite(t1):
            state = target + (state - target) * math.exp(-duration / tau)
    return out[0], out[1]


def simulate_hemo(config: SimConfig) -> HemoSeries:
    """Ground-truth hemodynamics at every NIR read time."""
    _, t = cycle_times(config.plan)
    c_hbo2, c_hb = lag_response(config.plan, config.state_targets, config.transition_tau_s, t)
    dd1, dd2 = forward_density(c_hbo2, c_hb, config.table)
    return HemoSeries(t, np.asarray(dd1), np.asarray(dd2), c_hbo2, c_hb)


def emit_columns(config: SimConfig, hemo: HemoSeries | None = None) -> FrameColumns:
    if hemo is None:
        hemo = simulate_hemo(config)
    white_t, nir_t = cycle_times(config.plan)
    if hemo.t.shape != nir_t.shape or not np.array_equal(hemo.t, nir_t):
        raise ValueError("hemo series does not match the plan's NIR read times")
    n_white = white_t.size
    n = n_white * (NIR_PER_CYCLE + 1)
    white_idx = np.arange(n_white) * (NIR_PER_CYCLE + 1)
    nir_idx = np.setdiff1d(np.arange(n), white_idx)

    t = np.empty(n)
    t[white_idx] = white_t
    t[nir_idx] = nir_t
    led = np.full(n, int(Led.NIR), dtype=np.int8)
    led[white_idx] = int(Led.WHITE)

    rng = np.random.default_rng(config.seed)
    cols = {c: np.zeros(n) for c in CHANNELS}
    drift = config.drift
    for c in ("x", "y", "z"):
        cols[c][white_idx] = config.baseline[c] * drift.factor(white_t, c)
    cols["ir1"][nir_idx] = intensity_from_density(config.baseline["ir1"], hemo.dd_l1, config.log_base) \
        * drift.factor(nir_t, "ir1")
    cols["ir2"][nir_idx] = intensity_from_density(config.baseline["ir2"], hemo.dd_l2, config.log_base) \
        * drift.factor(nir_t, "ir2")
    if config.noise_sigma > 0:
        for c, idx in (("x", white_idx), ("y", white_idx), ("z", white_idx),
                       ("ir1", nir_idx), ("ir2", nir_idx)):
            cols[c][idx] += rng.normal(0.0, config.noise_sigma, idx.size)
            np.maximum(cols[c], 0.0, out=cols[c])
    return FrameColumns(t, led, *(cols[c] for c in CHANNELS))


def emit_frames(config: SimConfig, hemo: HemoSeries | None = None) -> list[SensorFrame]:
    """Frame stream: one White frame then seven Nir frames per one-second cycle."""
    return emit_columns(config, hemo).to_frames()
