"""Exception types shared across the toolkit.

Everything derives from HsiError so callers can catch the whole family.
The CLI maps these onto exit codes (usage=1, data=2, numeric=3).
"""


class HsiError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(HsiError, ValueError):
    """Array extents or counts do not satisfy an operation's geometry."""


class ShapeError(DimensionError):
    """Tensor shapes are inconsistent with a network operation."""


class FormatError(HsiError, ValueError):
    """A file payload or header does not match its declared layout."""


class AxisError(HsiError, ValueError):
    """A wavelength axis is missing, non-monotone, or inconsistent."""


class GridError(HsiError, ValueError):
    """Sample spacing violates a uniform-grid requirement."""


class CoverageError(HsiError, ValueError):
    """A spectrum does not cover the requested wavelength window."""


class CalibrationError(HsiError, ValueError):
    """Degenerate calibration inputs (zero reference, DC == DC0, ...)."""


class ConfigError(HsiError, ValueError):
    """A configuration cannot produce a valid model or pipeline."""


class DataError(HsiError, ValueError):
    """Input data is degenerate for the requested operation."""
