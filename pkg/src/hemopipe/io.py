"""Versioned CSV and JSON persistence for frames, hemo series, feature sets and reports.

Every CSV starts with a tag line ``#hemopipe-<kind> v<version>`` followed by a
header row.  Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import CHANNELS, HemopipeError, Label, Led, SensorFrame, as_columns
from .dsp import NIR_RATE_HZ, SERIES_CHANNELS, FourChannelSeries
from .features import FeatureVector

CSV_VERSION = 1


class FileFormatError(HemopipeError, ValueError):
    code = "file-format"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise FileFormatError(f"refusing to write non-finite value {v!r}")
        return repr(v)
    return str(v)


def _write_csv(path, kind: str, header: Sequence[str], rows: Iterable[Sequence], extra: str = ""):
    with open(path, "w", newline="") as fh:
        fh.write(f"#hemopipe-{kind} v{CSV_VERSION}{(' ' + extra) if extra else ''}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path, kind: str) -> tuple[dict, list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        tag = fh.readline().strip()
        parts = tag.split()
        if len(parts) < 2 or parts[0] != f"#hemopipe-{kind}":
            raise FileFormatError(f"{path}: not a hemopipe {kind} file")
        if parts[1] != f"v{CSV_VERSION}":
            raise FileFormatError(f"{path}: unsupported {kind} version {parts[1]!r}")
        meta = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: missing header row") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise FileFormatError(f"{path}: row {i + 1} has {len(r)} fields, expected {len(header)}")
    return meta, header, rows


# --- raw frames ---------------------------------------------------------------

RAW_HEADER = ("t", "led") + CHANNELS


def write_frames_csv(path, frames) -> None:
    cols = as_columns(frames)
    leds = [Led(v).name for v in cols.led.tolist()]
    data = [getattr(cols, c).tolist() for c in ("t",) + CHANNELS]
    rows = ([t, led, *vals] for t, led, *vals in zip(data[0], leds, *data[1:]))
    _write_csv(path, "raw", RAW_HEADER, rows)


def read_frames_csv(path) -> list[SensorFrame]:
    _, header, rows = _read_csv(path, "raw")
    if tuple(header) != RAW_HEADER:
        raise FileFormatError(f"{path}: unexpected raw header {header}")
    return [
        SensorFrame(float(r[0]), *(float(v) for v in r[2:]), led=Led[r[1]])
        for r in rows
    ]


# --- hemo series --------------------------------------------------------------

HEMO_HEADER = ("t",) + SERIES_CHANNELS


def write_series_csv(path, series: FourChannelSeries) -> None:
    data = [series.times.tolist()] + [getattr(series, c).tolist() for c in SERIES_CHANNELS]
    _write_csv(path, "hemo", HEMO_HEADER, zip(*data), extra=f"sample_rate_hz={series.sample_rate_hz!r}")


def read_series_csv(path) -> FourChannelSeries:
    meta, header, rows = _read_csv(path, "hemo")
    if tuple(header) != HEMO_HEADER:
        raise FileFormatError(f"{path}: unexpected hemo header {header}")
    arr = np.array(rows, dtype=float).reshape(len(rows), len(HEMO_HEADER))
    rate = float(meta.get("sample_rate_hz", NIR_RATE_HZ))
    return FourChannelSeries(arr[:, 0], *(arr[:, i + 1] for i in range(4)), sample_rate_hz=rate)


# --- feature sets ---------------------------------------------------------------

TRAILER = ("label", "subject_id", "window_start_t")


def write_features_csv(path, dataset: Sequence[FeatureVector], names: Sequence[str] | None = None) -> None:
    if names is None:
        if not dataset:
            raise FileFormatError("cannot infer feature names from an empty dataset")
        names = dataset[0].names
    for fv in dataset:
        if fv.names != tuple(names):
            raise FileFormatError("feature vectors disagree on feature names")
    rows = ([*fv.values.tolist(), int(fv.label), fv.subject_id, float(fv.window_start_t)] for fv in dataset)
    _write_csv(path, "features", tuple(names) + TRAILER, rows)


def read_features_csv(path) -> list[FeatureVector]:
    _, header, rows = _read_csv(path, "features")
    if tuple(header[-3:]) != TRAILER:
        raise FileFormatError(f"{path}: feature header must end with {TRAILER}")
    names = tuple(header[:-3])
    out = []
    for r in rows:
        try:
            values = np.array(r[:-3], dtype=float)
            out.append(FeatureVector(values, Label.parse(r[-3]), r[-2], float(r[-1]), names))
        except ValueError as exc:
            raise FileFormatError(f"{path}: {exc}") from None
    return out


# --- JSON -----------------------------------------------------------------------

def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from None
