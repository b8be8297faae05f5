"""Modified Beer-Lambert law: intensities -> optical density -> hemoglobin concentrations.

All functions accept scalars or numpy arrays and broadcast.  Units are mM for
concentration, cm for path length and 1/(cm*mM) for extinction coefficients.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .core import DEFAULT_SINGULARITY_TOL, ExtinctionTable, HemopipeError, TableError

LOG_BASES = ("decadic", "natural")
DEFAULT_LOG_BASE = "decadic"


class IntensityDomainError(HemopipeError, ValueError):
    code = "intensity-domain"


def _check_base(log_base: str) -> str:
    if log_base not in LOG_BASES:
        raise ValueError(f"log_base must be one of {LOG_BASES}, got {log_base!r}")
    return log_base


def optical_density_delta(i_baseline, i_t, log_base: str = DEFAULT_LOG_BASE):
    """log(I_B / I_T); decadic unless ``log_base="natural"``."""
    _check_base(log_base)
    ib = np.asarray(i_baseline, dtype=float)
    it = np.asarray(i_t, dtype=float)
    for arr in (ib, it):
        if not (np.all(arr > 0) and np.all(np.isfinite(arr))):
            raise IntensityDomainError("intensities must be positive and finite")
    ratio = ib / it
    out = np.log10(ratio) if log_base == "decadic" else np.log(ratio)
    return out.item() if out.ndim == 0 else out


def intensity_from_density(i_baseline, dd, log_base: str = DEFAULT_LOG_BASE):
    """Inverse of :func:`optical_density_delta`: I_T = I_B * base**(-dd)."""
    _check_base(log_base)
    dd = np.asarray(dd, dtype=float)
    factor = np.power(10.0, -dd) if log_base == "decadic" else np.exp(-dd)
    out = np.asarray(i_baseline, dtype=float) * factor
    return out.item() if out.ndim == 0 else out


def invert_concentrations(dd_l1, dd_l2, table: ExtinctionTable, tol: float = DEFAULT_SINGULARITY_TOL):
    """Concentration changes (dHbO2, dHb) from optical-density changes at both wavelengths."""
    table.check(tol)
    e = table
    d1 = np.asarray(dd_l1, dtype=float)
    d2 = np.asarray(dd_l2, dtype=float)
    # the two denominators are negatives of one another; kept in the published form
    den_hbo2 = e.path_length_cm * (e.eps_hb_l2 * e.eps_hbo2_l1 - e.eps_hb_l1 * e.eps_hbo2_l2)
    den_hb = e.path_length_cm * (e.eps_hb_l1 * e.eps_hbo2_l2 - e.eps_hb_l2 * e.eps_hbo2_l1)
    c_hbo2 = (e.eps_hb_l2 * d1 - e.eps_hb_l1 * d2) / den_hbo2
    c_hb = (e.eps_hbo2_l2 * d1 - e.eps_hbo2_l1 * d2) / den_hb
    if c_hbo2.ndim == 0:
        return c_hbo2.item(), c_hb.item()
    return c_hbo2, c_hb


def absolute_concentrations(d_l1, d_l2, table: ExtinctionTable, tol: float = DEFAULT_SINGULARITY_TOL):
    """Absolute (C_HbO2, C_Hb) from absolute optical densities; same algebra as the delta form."""
    return invert_concentrations(d_l1, d_l2, table, tol)


def forward_density(d_chbo2, d_chb, table: ExtinctionTable):
    """Optical-density changes produced by concentration changes: D = L * (eps_HbO2*C_HbO2 + eps_Hb*C_Hb)."""
    e = table
    c1 = np.asarray(d_chbo2, dtype=float)
    c2 = np.asarray(d_chb, dtype=float)
    dd1 = e.path_length_cm * (e.eps_hbo2_l1 * c1 + e.eps_hb_l1 * c2)
    dd2 = e.path_length_cm * (e.eps_hbo2_l2 * c1 + e.eps_hb_l2 * c2)
    if dd1.ndim == 0:
        return dd1.item(), dd2.item()
    return dd1, dd2


TABLE_KEYS = ("eps_hbo2_l1", "eps_hb_l1", "eps_hbo2_l2", "eps_hb_l2", "path_length_cm")


def parse_table(text: str) -> ExtinctionTable:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TableError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in TABLE_KEYS:
            raise TableError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise TableError(f"line {lineno}: {key} is not a number") from None
    missing = [k for k in TABLE_KEYS[:4] if k not in values]
    if missing:
        raise TableError(f"missing keys: {', '.join(missing)}")
    return ExtinctionTable(**values)


def format_table(table: ExtinctionTable) -> str:
    return "".join(f"{k} = {getattr(table, k)!r}\n" for k in TABLE_KEYS)


def load_table(path: str | Path) -> ExtinctionTable:
    return parse_table(Path(path).read_text())


def default_table() -> ExtinctionTable:
    """Hemoglobin coefficients at 730/940 nm shipped with the package."""
    text = resources.files("hemopipe").joinpath("data/extinction_730_940.txt").read_text()
    return parse_table(text)
