"""Spectral differentiation, extrema band screening, and red-edge extraction.

Derivatives are taken with respect to wavelength (nm), so values have units
reflectance/nm. Two estimators are provided: a centered difference that
averages the slopes to the two nearest neighbors, and a Savitzky-Golay
estimator that fits a least-squares polynomial in a sliding window and
differentiates the fit. Band screening collects the extrema of the first and
second derivatives separately and intersects them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CoverageError, DimensionError, GridError
from .hypercube import WavelengthAxis

PROV_FIRST = "first-deriv"
PROV_SECOND = "second-deriv"
PROV_BOTH = "both"


@dataclass(frozen=True)
class Spectrum:
    """A single reflectance spectrum on a strictly increasing wavelength grid."""

    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "values", vals)
        if wl.ndim != 1 or wl.shape != vals.shape:
            raise DimensionError("wavelengths and values must be equal-length 1-D arrays")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise GridError("wavelengths must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("spectrum contains NaN/inf; filter masked pixels first")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class SGConfig:
    """Savitzky-Golay window setup: odd window, fit order, derivative order."""

    window: int = 11
    poly_order: int = 3
    deriv_order: int = 1

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if not (1 <= self.poly_order < self.window):
            raise ValueError(f"poly_order must be in [1, window), got {self.poly_order}")
        if self.deriv_order not in (1, 2):
            raise ValueError(f"deriv_order must be 1 or 2, got {self.deriv_order}")
        if self.deriv_order > self.poly_order:
            raise ValueError("deriv_order cannot exceed poly_order")


@dataclass(frozen=True)
class BandSelection:
    """Retained band indices with the screening method that kept each."""

    axis: WavelengthAxis
    indices: np.ndarray
    provenance: tuple

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if idx.ndim != 1:
            raise DimensionError("indices must be 1-D")
        if idx.size != len(self.provenance):
            raise DimensionError("one provenance tag per index required")
        if idx.size and (idx.min() < 0 or idx.max() >= self.axis.count):
            raise IndexError("band index outside wavelength axis")
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("indices must be sorted and unique")

    @property
    def wavelengths_nm(self) -> np.ndarray:
        return self.axis.values[self.indices]

    def __len__(self):
        return self.indices.size


def central_difference(s: Spectrum, order: int = 1) -> Spectrum:
    """Derivative estimate averaging the slopes to both nearest neighbors.

    Interior point i gets the mean of the left and right secant slopes;
    endpoints get their single one-sided slope. Order 2 applies the order-1
    operator twice.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if len(s) < 3:
        raise DimensionError("derivative needs at least 3 samples")
    if order == 2:
        return central_difference(central_difference(s, 1), 1)
    x, y = s.wavelengths, s.values
    slopes = np.diff(y) / np.diff(x)
    d = np.empty_like(y)
    d[0] = slopes[0]
    d[-1] = slopes[-1]
    d[1:-1] = 0.5 * (slopes[1:] + slopes[:-1])
    return Spectrum(x, d)


def _sg_coeff_row(window: int, poly_order: int, deriv_order: int, eval_pos: int) -> np.ndarray:
    """Window weights whose dot with the samples gives the derivative.

    Local coordinates are scaled to [-1, 1] across the half-window for
    conditioning; the physical wavelength spacing is applied by the caller.
    """
    half = (window - 1) // 2
    tau = (np.arange(window) - eval_pos) / half
    V = np.vander(tau, poly_order + 1, increasing=True)
    pinv = np.linalg.pinv(V)
    scale = np.prod(np.arange(1, deriv_order + 1)) / half**deriv_order
    return pinv[deriv_order] * scale


def savitzky_golay_derivative(s: Spectrum, cfg: SGConfig) -> Spectrum:
    """Least-squares polynomial derivative over a sliding window.

    Requires a uniform wavelength grid (relative tolerance 1e-6). Boundary
    points reuse the same polynomial order over a window shifted to stay
    inside the data, so output length equals input length. Exact for
    polynomials of degree <= poly_order.
    """
    n = len(s)
    if n < cfg.window:
        raise DimensionError(f"spectrum length {n} shorter than window {cfg.window}")
    x, y = s.wavelengths, s.values
    steps = np.diff(x)
    h = steps.mean()
    if np.max(np.abs(steps - h)) > 1e-6 * abs(h):
        raise GridError("Savitzky-Golay derivative requires an evenly spaced grid")

    w = cfg.window
    half = (w - 1) // 2
    rows = {e: _sg_coeff_row(w, cfg.poly_order, cfg.deriv_order, e) for e in range(w)}
    starts = np.clip(np.arange(n) - half, 0, n - w)
    evals = np.arange(n) - starts
    coeff = np.stack([rows[int(e)] for e in evals])
    windows = sliding_window_view(y, w)
    d = np.einsum("ij,ij->i", coeff, windows[starts]) / h**cfg.deriv_order
    return Spectrum(x, d)


def find_extrema_bands(d: Spectrum, prominence_ratio: float, tag: str = PROV_FIRST) -> BandSelection:
    """Bands where a derivative spectrum has a prominent strict local extremum.

    A band qualifies when it is strictly greater (or strictly smaller) than
    both neighbors and its magnitude reaches prominence_ratio times the
    largest magnitude anywhere in the spectrum. Endpoints never qualify. An
    all-zero derivative yields an empty selection.
    """
    if not (0 < prominence_ratio <= 1):
        raise ValueError(f"prominence_ratio must be in (0, 1], got {prominence_ratio}")
    axis = WavelengthAxis(d.wavelengths)
    v = d.values
    peak = np.max(np.abs(v)) if v.size else 0.0
    if peak == 0.0 or v.size < 3:
        return BandSelection(axis, np.empty(0, dtype=np.int64), ())
    mid = v[1:-1]
    is_max = (mid > v[:-2]) & (mid > v[2:])
    is_min = (mid < v[:-2]) & (mid < v[2:])
    prominent = np.abs(mid) >= prominence_ratio * peak
    idx = np.flatnonzero((is_max | is_min) & prominent) + 1
    return BandSelection(axis, idx, (tag,) * idx.size)


def intersect_selections(a: BandSelection, b: BandSelection, tol_bands: int = 1) -> BandSelection:
    """Bands of ``a`` confirmed by a band of ``b`` within tol_bands indices.

    Matched bands get provenance "both"; when several bands of ``b`` are in
    range, the nearest confirms.
    """
    if a.axis != b.axis:
        raise ValueError("selections use different wavelength axes")
    if tol_bands < 0:
        raise ValueError("tol_bands must be >= 0")
    if len(a) == 0 or len(b) == 0:
        return BandSelection(a.axis, np.empty(0, dtype=np.int64), ())
    dist = np.min(np.abs(a.indices[:, None] - b.indices[None, :]), axis=1)
    kept = a.indices[dist <= tol_bands]
    return BandSelection(a.axis, kept, (PROV_BOTH,) * kept.size)


def red_edge_position(s: Spectrum, lo_nm: float = 680.0, hi_nm: float = 750.0) -> float:
    """Wavelength of maximum first derivative inside [lo_nm, hi_nm].

    Uses the centered-difference derivative on the full spectrum and
    restricts the argmax to the window; ties resolve to the lower wavelength.
    """
    inside = (s.wavelengths >= lo_nm) & (s.wavelengths <= hi_nm)
    if inside.sum() < 5:
        raise CoverageError(
            f"need >= 5 samples in [{lo_nm}, {hi_nm}] nm, found {int(inside.sum())}"
        )
    d = central_difference(s, 1)
    window_vals = d.values[inside]
    window_wl = s.wavelengths[inside]
    return float(window_wl[int(np.argmax(window_vals))])


def screen_bands(cubes, sg: SGConfig, prominence_ratio: float, tol_bands: int = 1) -> BandSelection:
    """Intersected first/second-derivative extrema over a set of cubes.

    Each cube contributes its foreground-mean spectrum. Extrema of the
    Savitzky-Golay first derivative are accumulated across cubes, likewise
    for the second derivative, and the two accumulated selections are
    intersected. The result is sorted by band index.
    """
    cubes = list(cubes)
    if not cubes:
        raise ValueError("screen_bands needs at least one cube")
    axis = cubes[0].axis
    for c in cubes[1:]:
        if c.axis != axis:
            raise ValueError("all cubes must share one wavelength axis")
    first_idx, second_idx = set(), set()
    usable = 0
    for c in cubes:
        mean = c.foreground_mean_spectrum()
        if not np.all(np.isfinite(mean)):
            continue
        usable += 1
        spec = Spectrum(axis.values, mean)
        d1 = savitzky_golay_derivative(spec, replace(sg, deriv_order=1))
        d2 = savitzky_golay_derivative(spec, replace(sg, deriv_order=2))
        first_idx.update(find_extrema_bands(d1, prominence_ratio, PROV_FIRST).indices.tolist())
        second_idx.update(find_extrema_bands(d2, prominence_ratio, PROV_SECOND).indices.tolist())
    if usable == 0:
        raise ValueError("no cube has foreground pixels to screen")
    first = BandSelection(axis, np.asarray(sorted(first_idx), dtype=np.int64),
                          (PROV_FIRST,) * len(first_idx))
    second = BandSelection(axis, np.asarray(sorted(second_idx), dtype=np.int64),
                           (PROV_SECOND,) * len(second_idx))
    return intersect_selections(first, second, tol_bands)
