"""Shared domain types: sensor frames, extinction tables, hemo samples, session plans."""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np


class HemopipeError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class FrameValidationError(HemopipeError, ValueError):
    code = "frame-validation"

    def __init__(self, field: str, problem: str):
        self.field = field
        self.problem = problem
        super().__init__(f"{field} {problem}")


class TableError(HemopipeError, ValueError):
    code = "extinction-table"


class SingularTableError(TableError):
    code = "singular-table"


class InsufficientDataError(HemopipeError, ValueError):
    code = "insufficient-data"


class OutOfRangeError(HemopipeError, ValueError):
    code = "out-of-range"


class Label(enum.IntEnum):
    REST = 0
    LOW_LOAD = 1
    HIGH_LOAD = 2

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, str):
            key = value.strip().replace("-", "").replace("_", "").lower()
            names = {"rest": cls.REST, "lowload": cls.LOW_LOAD, "highload": cls.HIGH_LOAD}
            if key in names:
                return names[key]
            if key.isdigit():
                return cls(int(key))
            raise ValueError(f"unknown label {value!r}")
        return cls(int(value))


class Led(enum.IntEnum):
    WHITE = 0
    NIR = 1


CHANNELS = ("x", "y", "z", "ir1", "ir2")


@dataclass(frozen=True)
class SensorFrame:
    t: float
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    ir1: float = 0.0
    ir2: float = 0.0
    led: Led = Led.NIR


def validate_frame(frame: SensorFrame) -> SensorFrame:
    """Return ``frame`` unchanged, or raise naming the first offending field."""
    if not math.isfinite(frame.t):
        raise FrameValidationError("t", "non-finite")
    for name in CHANNELS:
        value = getattr(frame, name)
        if not math.isfinite(value):
            raise FrameValidationError(name, "non-finite")
        if value < 0:
            raise FrameValidationError(name, "negative")
    if not isinstance(frame.led, Led):
        raise FrameValidationError("led", "not a Led")
    return frame


def validate_stream(frames: Iterable[SensorFrame]) -> list[SensorFrame]:
    out = []
    prev = -math.inf
    for frame in frames:
        validate_frame(frame)
        if frame.t <= prev:
            raise FrameValidationError("t", f"not increasing at t={frame.t!r}")
        prev = frame.t
        out.append(frame)
    return out


DEFAULT_SINGULARITY_TOL = 1e-9


@dataclass(frozen=True)
class ExtinctionTable:
    """Extinction coefficients at two wavelengths, 1/(cm*mM), and the optical path in cm.

    ``l1`` is the shorter wavelength (730 nm on the device), ``l2`` the longer (940 nm).
    """

    eps_hbo2_l1: float
    eps_hb_l1: float
    eps_hbo2_l2: float
    eps_hb_l2: float
    path_length_cm: float = 0.75

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise TableError(f"{f.name} non-finite")
        for name in ("eps_hbo2_l1", "eps_hb_l1", "eps_hbo2_l2", "eps_hb_l2"):
            if getattr(self, name) < 0:
                raise TableError(f"{name} negative")
        if self.path_length_cm <= 0:
            raise TableError("path_length_cm must be positive")

    @property
    def determinant(self) -> float:
        return self.eps_hb_l2 * self.eps_hbo2_l1 - self.eps_hb_l1 * self.eps_hbo2_l2

    def check(self, tol: float = DEFAULT_SINGULARITY_TOL) -> "ExtinctionTable":
        if not abs(self.determinant) > tol:
            raise SingularTableError(
                f"|determinant| = {abs(self.determinant):.3g} is not above {tol:.3g}"
            )
        return self


@dataclass(frozen=True)
class HemoSample:
    t: float
    dd_l1: float
    dd_l2: float
    d_chbo2: float
    d_chb: float


@dataclass(frozen=True)
class SessionPlan:
    segments: tuple[tuple[Label, float], ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("plan needs at least one segment")
        norm = []
        for label, duration in self.segments:
            duration = float(duration)
            if not (math.isfinite(duration) and duration > 0):
                raise ValueError(f"segment duration must be positive, got {duration!r}")
            norm.append((Label.parse(label), duration))
        object.__setattr__(self, "segments", tuple(norm))

    @classmethod
    def default(cls) -> "SessionPlan":
        return cls(
            (
                (Label.REST, 120.0),
                (Label.LOW_LOAD, 300.0),
                (Label.REST, 120.0),
                (Label.HIGH_LOAD, 300.0),
                (Label.REST, 120.0),
            )
        )

    @classmethod
    def from_pairs(cls, pairs: Sequence) -> "SessionPlan":
        return cls(tuple((Label.parse(lab), float(dur)) for lab, dur in pairs))

    @property
    def total_duration(self) -> float:
        return math.fsum(d for _, d in self.segments)

    @property
    def boundaries(self) -> list[float]:
        """Start time of every segment."""
        starts, acc = [], 0.0
        for _, d in self.segments:
            starts.append(acc)
            acc += d
        return starts

    def to_json(self) -> dict:
        return {"segments": [[lab.name, dur] for lab, dur in self.segments]}

    @classmethod
    def from_json(cls, obj) -> "SessionPlan":
        if isinstance(obj, dict):
            obj = obj["segments"]
        pairs = []
        for seg in obj:
            if isinstance(seg, dict):
                pairs.append((seg["label"], seg["duration_s"]))
            else:
                pairs.append(tuple(seg))
        return cls.from_pairs(pairs)


def segment_index(plan: SessionPlan, t: float) -> int:
    if not (0.0 <= t < plan.total_duration):
        raise OutOfRangeError(f"t={t!r} outside [0, {plan.total_duration!r})")
    # a boundary time belongs to the segment that starts there
    return bisect.bisect_right(plan.boundaries, t) - 1


def label_at(plan: SessionPlan, t: float) -> Label:
    return plan.segments[segment_index(plan, t)][0]


@dataclass(frozen=True)
class FrameColumns:
    """Column-oriented frame stream; ``led`` holds :class:`Led` values as ints."""

    t: np.ndarray
    led: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    ir1: np.ndarray
    ir2: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_frames(cls, frames: Sequence[SensorFrame]) -> "FrameColumns":
        return cls(
            np.array([f.t for f in frames], dtype=float),
            np.array([int(f.led) for f in frames], dtype=np.int8),
            *(np.array([getattr(f, c) for f in frames], dtype=float) for c in CHANNELS),
        )

    def to_frames(self) -> list[SensorFrame]:
        leds = (Led.WHITE, Led.NIR)
        cols = [self.t.tolist(), self.x.tolist(), self.y.tolist(), self.z.tolist(),
                self.ir1.tolist(), self.ir2.tolist()]
        return [
            SensorFrame(t, x, y, z, i1, i2, leds[led])
            for t, x, y, z, i1, i2, led in zip(*cols, self.led.tolist())
        ]

    def select(self, led: Led) -> "FrameColumns":
        mask = self.led == int(led)
        return FrameColumns(*(getattr(self, f.name)[mask] for f in fields(self)))


def as_columns(frames) -> FrameColumns:
    if isinstance(frames, FrameColumns):
        return frames
    return FrameColumns.from_frames(list(frames))
