"""Background removal by per-pixel spectral dispersion thresholding.

A pixel is background when the standard deviation of its spectrum reaches
``ratio`` times its mean (default one half). Calibration plates, tripods and
other clutter have flat-noise or mixed spectra that trip the threshold while
vegetation spectra stay below it. Removed pixels get NaN in every band and a
false mask entry.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .hypercube import SENTINEL, HyperCube


def remove_background(cube: HyperCube, ratio: float = 0.5) -> HyperCube:
    """Return a new cube with high-dispersion pixels masked out.

    Per pixel, let mu and sigma be the mean and population standard deviation
    of its spectrum across bands. The pixel is kept iff sigma < ratio * mu
    and mu > 0; pixels with non-positive mean are background by definition
    (non-physical foreground reflectance). Already-masked pixels stay masked,
    which makes the operation idempotent. The input cube is untouched.
    """
    if cube.bands < 2:
        raise DimensionError("background removal needs at least 2 bands")
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    flat = cube.data.reshape(cube.bands, -1)
    mu = flat.mean(axis=0)
    sigma = flat.std(axis=0)
    with np.errstate(invalid="ignore"):
        keep = (sigma < ratio * mu) & (mu > 0)
    keep &= cube.mask.ravel()
    new_mask = keep.reshape(cube.height, cube.width)
    return HyperCube(cube.data.copy(), cube.axis, new_mask)


def mask_fraction(cube: HyperCube) -> float:
    """Fraction of pixels that are masked out, in [0, 1]."""
    total = cube.mask.size
    return float((~cube.mask).sum() / total)


def mask_summary(cube: HyperCube) -> str:
    """One-line summary used by the CLI: masked=<n> total=<n> fraction=<f>."""
    masked = int((~cube.mask).sum())
    total = int(cube.mask.size)
    return f"masked={masked} total={total} fraction={masked / total:.6f}"
