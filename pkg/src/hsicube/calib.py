"""Radiometric calibration: reference-plate reflectance and linear gain/offset.

Two routes are provided. Reference-plate calibration converts raw digital
numbers to target reflectance per band (object counts divided by plate
counts, scaled by the plate's lab-calibrated reflectance). The linear route
solves radiance = a * DC + b from a known radiance and a dark-current
reading, with the constraint that the dark frame maps to zero.

All calibration quantities are band-indexed vectors: hyperspectral gain
varies by band even though the underlying relations are scalar.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, DimensionError, FormatError
from .hypercube import SENTINEL, HyperCube, WavelengthAxis


@dataclass
class CalibrationInputs:
    """Raw object counts plus reference-plate counts and reflectance.

    ``dn_object`` is (bands, height, width); ``dn_reference`` and
    ``rp_reference`` are per-band vectors.
    """

    dn_object: np.ndarray
    dn_reference: np.ndarray
    rp_reference: np.ndarray
    axis: WavelengthAxis

    def __post_init__(self):
        self.dn_object = np.asarray(self.dn_object, dtype=np.float64)
        self.dn_reference = np.asarray(self.dn_reference, dtype=np.float64)
        self.rp_reference = np.asarray(self.rp_reference, dtype=np.float64)
        if self.dn_object.ndim != 3:
            raise DimensionError("dn_object must be (bands, height, width)")
        bands = self.dn_object.shape[0]
        if self.dn_reference.shape != (bands,) or self.rp_reference.shape != (bands,):
            raise DimensionError("reference vectors must have one entry per band")
        if self.axis.count != bands:
            raise DimensionError("wavelength axis length must match band count")
        if np.any(self.rp_reference <= 0) or np.any(self.rp_reference > 1):
            raise CalibrationError("rp_reference values must lie in (0, 1]")


@dataclass
class LinearCalibration:
    """Per-band gain ``a`` and offset ``b`` with b = -a * DC0."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if self.a.shape != self.b.shape:
            raise DimensionError("a and b must have matching shapes")
        if not np.all(np.isfinite(self.a)) or np.any(self.a == 0):
            raise CalibrationError("gain must be finite and nonzero in every band")


def reflectance_calibrate(inputs: CalibrationInputs) -> HyperCube:
    """Convert raw counts to target reflectance per band.

    Output element = dn_object / dn_reference * rp_reference, elementwise per
    band. Negative results (object darker than the dark level) are kept;
    downstream masking decides what to discard.
    """
    bad = ~np.isfinite(inputs.dn_reference) | (inputs.dn_reference == 0)
    if bad.any():
        idx = np.flatnonzero(bad)
        raise CalibrationError(f"dn_reference is zero or non-finite in bands {idx.tolist()}")
    tr = inputs.dn_object / inputs.dn_reference[:, None, None] * inputs.rp_reference[:, None, None]
    return HyperCube(tr, inputs.axis)


def solve_linear_calibration(L, DC, DC0) -> LinearCalibration:
    """Solve a = L / (DC - DC0), b = -a * DC0 per band.

    By construction the dark reading DC0 maps to exactly zero and DC maps to
    exactly L.
    """
    L = np.atleast_1d(np.asarray(L, dtype=np.float64))
    DC = np.atleast_1d(np.asarray(DC, dtype=np.float64))
    DC0 = np.atleast_1d(np.asarray(DC0, dtype=np.float64))
    if not (L.shape == DC.shape == DC0.shape):
        raise DimensionError("L, DC and DC0 must have matching shapes")
    degenerate = DC == DC0
    if degenerate.any():
        idx = np.flatnonzero(degenerate)
        raise CalibrationError(f"DC equals DC0 in bands {idx.tolist()}: gain undefined")
    a = L / (DC - DC0)
    b = -a * DC0
    return LinearCalibration(a, b)


def apply_linear_calibration(cal: LinearCalibration, DC) -> np.ndarray:
    """Affine map counts -> radiance, broadcasting per band."""
    DC = np.asarray(DC, dtype=np.float64)
    bands = cal.a.shape[0]
    if DC.ndim == 0 or DC.shape[0] != bands:
        raise DimensionError(f"DC leading dimension must be {bands} bands, got {DC.shape}")
    shape = (bands,) + (1,) * (DC.ndim - 1)
    return cal.a.reshape(shape) * DC + cal.b.reshape(shape)


def average_spectra(spectra) -> np.ndarray:
    """Elementwise mean of equally long spectra, skipping NaN sentinels.

    A band where every input is NaN stays NaN.
    """
    if len(spectra) == 0:
        raise ValueError("average_spectra needs at least one spectrum")
    arr = np.asarray([np.asarray(s, dtype=np.float64) for s in spectra])
    if arr.ndim != 2:
        raise DimensionError("all spectra must have the same length")
    valid = np.isfinite(arr)
    n = valid.sum(axis=0)
    total = np.where(valid, arr, 0.0).sum(axis=0)
    out = np.full(arr.shape[1], SENTINEL)
    nz = n > 0
    out[nz] = total[nz] / n[nz]
    return out


def read_reference_csv(path):
    """Read a reference-plate CSV with wavelength_nm,dn_reference,rp_reference rows.

    A non-numeric first row is treated as a header. Returns
    (wavelengths, dn_reference, rp_reference) float arrays sorted by
    wavelength.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            try:
                rows.append(tuple(float(v) for v in row[:3]))
            except ValueError:
                if lineno == 1:
                    continue
                raise FormatError(f"{path}:{lineno}: non-numeric reference row {row!r}")
            else:
                if len(row) < 3:
                    raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
    if not rows:
        raise FormatError(f"{path}: no reference rows found")
    rows.sort(key=lambda r: r[0])
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, 0], arr[:, 1], arr[:, 2]
