"""Hyperspectral preprocessing, band screening, and spectral-spatial classification.

Submodules are imported explicitly (``from hsicube import spectral``, ...)
so that the CLI can cap BLAS threads before numpy loads.
"""

__version__ = "0.1.0"
