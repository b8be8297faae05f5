"""Two-wavelength NIR hemodynamics pipeline and cognitive-load classifier."""

from .core import (
    ExtinctionTable,
    HemoSample,
    HemopipeError,
    Label,
    Led,
    SensorFrame,
    SessionPlan,
    label_at,
    validate_frame,
)

__version__ = "0.1.0"

__all__ = [
    "ExtinctionTable",
    "HemoSample",
    "HemopipeError",
    "Label",
    "Led",
    "SensorFrame",
    "SessionPlan",
    "label_at",
    "validate_frame",
]
