"""Hyperspectral data cubes: wavelength axis, validity mask, tiling, file I/O.

A cube stores reflectance as a (bands, height, width) float64 array in
band-sequential order (all of band 0, then band 1, ...). Pixels removed by
background masking carry NaN in every band and ``mask`` false; reductions in
this toolkit skip those sentinels explicitly.

Two on-disk formats are supported:

``envi-bsq``
    Text header ``<path>.hdr`` with ``samples``, ``lines``, ``bands``,
    ``data type = 4`` (32-bit float), ``interleave = bsq`` and a
    ``wavelength = {...}`` list; binary payload little-endian float32.

``raw-le``
    Flat little-endian float32 payload in band-sequential order plus a
    sidecar descriptor ``<path>.desc`` with lines ``height=<n>``,
    ``width=<n>``, ``bands=<n>``, ``wavelengths=<comma list>``.

Payloads are 32-bit, so a save/load round trip is bit-exact for values that
are exactly representable in float32 (anything previously loaded from disk).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import AxisError, DimensionError, FormatError

SENTINEL = np.nan

_FORMATS = ("envi-bsq", "raw-le")


@dataclass(frozen=True)
class WavelengthAxis:
    """Band-center wavelengths in nm, strictly increasing."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise AxisError("wavelength axis must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise AxisError("wavelengths must be finite and positive")
        if values.size > 1 and not np.all(np.diff(values) > 0):
            raise AxisError("wavelengths must be strictly increasing")

    @property
    def count(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.count

    def nearest_index(self, nm: float) -> int:
        """Index of the band whose center is closest to ``nm``."""
        return int(np.argmin(np.abs(self.values - nm)))

    def __eq__(self, other) -> bool:
        return isinstance(other, WavelengthAxis) and np.array_equal(self.values, other.values)


class HyperCube:
    """H x W x B reflectance cube with wavelength axis and validity mask.

    ``data`` is held as (bands, height, width); ``mask`` is (height, width)
    with True marking foreground pixels. Construction takes ownership of the
    arrays and forces NaN into every band of masked-out pixels.
    """

    def __init__(self, data, axis: WavelengthAxis, mask=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise DimensionError(f"cube data must be 3-D (bands, height, width), got {data.ndim}-D")
        bands, height, width = data.shape
        if bands == 0 or height == 0 or width == 0:
            raise DimensionError(f"cube dimensions must be positive, got {data.shape}")
        if axis.count != bands:
            raise AxisError(f"axis has {axis.count} wavelengths but cube has {bands} bands")
        if mask is None:
            mask = np.ones((height, width), dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (height, width):
                raise DimensionError(f"mask shape {mask.shape} != spatial shape {(height, width)}")
        if not mask.all():
            data[:, ~mask] = SENTINEL
        self.data = data
        self.axis = axis
        self.mask = mask

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return (self.height, self.width, self.bands)

    def copy(self) -> "HyperCube":
        return HyperCube(self.data.copy(), self.axis, self.mask.copy())

    def foreground_mean_spectrum(self) -> np.ndarray:
        """Per-band mean over foreground pixels; NaN for bands with none."""
        flat = self.data.reshape(self.bands, -1)
        valid = np.isfinite(flat)
        n = valid.sum(axis=1)
        s = np.where(valid, flat, 0.0).sum(axis=1)
        out = np.full(self.bands, SENTINEL)
        nz = n > 0
        out[nz] = s[nz] / n[nz]
        return out

    def __repr__(self):
        return f"HyperCube(h={self.height}, w={self.width}, bands={self.bands})"


@dataclass
class TileSet:
    """Tiles cut from a parent cube (or generated directly), with labels."""

    tiles: list
    origins: list
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.labels is None:
            self.labels = np.zeros(len(self.tiles), dtype=np.int64)
        else:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.tiles) != len(self.origins) or len(self.tiles) != self.labels.size:
            raise DimensionError("tiles, origins and labels must have equal lengths")

    def __len__(self):
        return len(self.tiles)


def crop_tiles(cube: HyperCube, tile_size: int, label: int = 0) -> TileSet:
    """Cut ``cube`` into non-overlapping tile_size x tile_size tiles.

    Tiles are emitted row-major; partial tiles at the right/bottom edge are
    dropped. Channel data is copied untouched and every tile shares the
    parent wavelength axis.
    """
    if tile_size <= 0 or tile_size > min(cube.height, cube.width):
        raise DimensionError(
            f"tile_size {tile_size} invalid for {cube.height}x{cube.width} cube"
        )
    tiles, origins = [], []
    for r0 in range(0, cube.height - tile_size + 1, tile_size):
        for c0 in range(0, cube.width - tile_size + 1, tile_size):
            sub = cube.data[:, r0:r0 + tile_size, c0:c0 + tile_size].copy()
            sub_mask = cube.mask[r0:r0 + tile_size, c0:c0 + tile_size].copy()
            tiles.append(HyperCube(sub, cube.axis, sub_mask))
            origins.append((r0, c0))
    labels = np.full(len(tiles), label, dtype=np.int64)
    return TileSet(tiles, origins, labels)


def pixel_spectrum(cube: HyperCube, x: int, y: int) -> np.ndarray:
    """Spectrum of pixel (x=row, y=column); all-NaN if the pixel is masked."""
    if not (0 <= x < cube.height and 0 <= y < cube.width):
        raise IndexError(f"pixel ({x}, {y}) outside {cube.height}x{cube.width} cube")
    return cube.data[:, x, y].copy()


def _descriptor_path(path: str) -> str:
    return str(path) + ".desc"


def _header_path(path: str) -> str:
    return str(path) + ".hdr"


def save_cube(cube: HyperCube, path, fmt: str = "raw-le") -> None:
    """Write ``cube`` to ``path`` in the given format.

    Payloads are little-endian float32 in band-sequential order for both
    formats; only the metadata sidecar differs.
    """
    if fmt not in _FORMATS:
        raise FormatError(f"unknown format {fmt!r}, expected one of {_FORMATS}")
    if cube.bands == 0:
        raise DimensionError("cannot save a zero-band cube")
    payload = cube.data.astype("<f4").tobytes()
    wl = ",".join(repr(float(v)) for v in cube.axis.values)
    try:
        if fmt == "raw-le":
            with open(_descriptor_path(path), "w") as fh:
                fh.write(f"height={cube.height}\n")
                fh.write(f"width={cube.width}\n")
                fh.write(f"bands={cube.bands}\n")
                fh.write(f"wavelengths={wl}\n")
        else:
            with open(_header_path(path), "w") as fh:
                fh.write("ENVI\n")
                fh.write(f"samples = {cube.width}\n")
                fh.write(f"lines = {cube.height}\n")
                fh.write(f"bands = {cube.bands}\n")
                fh.write("header offset = 0\n")
                fh.write("file type = ENVI Standard\n")
                fh.write("data type = 4\n")
                fh.write("interleave = bsq\n")
                fh.write("byte order = 0\n")
                fh.write("wavelength = {\n")
                fh.write(" " + wl.replace(",", ", ") + "\n")
                fh.write("}\n")
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IOError(f"cannot write cube to {path}: {exc}") from exc


def load_cube(path, fmt: str = "raw-le") -> HyperCube:
    """Read a cube written by :func:`save_cube`; mask starts all-true.

    NaN payload values (the removed-pixel sentinel) are restored as masked
    pixels when a whole spectrum is NaN.
    """
    if fmt not in _FORMATS:
        raise FormatError(f"unknown format {fmt!r}, expected one of {_FORMATS}")
    if not os.path.exists(path):
        raise IOError(f"no such cube file: {path}")
    if fmt == "raw-le":
        height, width, bands, wavelengths = _read_descriptor(_descriptor_path(path))
    else:
        height, width, bands, wavelengths = _read_envi_header(_header_path(path))
    if len(wavelengths) != bands:
        raise AxisError(f"{bands} bands declared but {len(wavelengths)} wavelengths listed")
    axis = WavelengthAxis(np.asarray(wavelengths))
    expected = bands * height * width * 4
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(f"payload is {actual} bytes, header implies {expected}")
    raw = np.fromfile(path, dtype="<f4").astype(np.float64).reshape(bands, height, width)
    mask = np.isfinite(raw).any(axis=0)
    return HyperCube(raw, axis, mask)


def _read_descriptor(desc_path):
    if not os.path.exists(desc_path):
        raise FormatError(f"missing raw-le descriptor {desc_path}")
    fields = {}
    with open(desc_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"bad descriptor line {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    try:
        height = int(fields["height"])
        width = int(fields["width"])
        bands = int(fields["bands"])
        wavelengths = [float(v) for v in fields["wavelengths"].split(",") if v.strip()]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"incomplete or malformed descriptor {desc_path}: {exc}") from exc
    return height, width, bands, wavelengths


def _read_envi_header(hdr_path):
    if not os.path.exists(hdr_path):
        raise FormatError(f"missing ENVI header {hdr_path}")
    with open(hdr_path) as fh:
        text = fh.read()
    if not text.lstrip().upper().startswith("ENVI"):
        raise FormatError(f"{hdr_path} is not an ENVI header")

    def scalar(name):
        m = re.search(rf"^\s*{name}\s*=\s*(\S+)\s*$", text, re.MULTILINE | re.IGNORECASE)
        if m is None:
            raise FormatError(f"ENVI header missing field {name!r}")
        return m.group(1)

    try:
        width = int(scalar("samples"))
        height = int(scalar("lines"))
        bands = int(scalar("bands"))
    except ValueError as exc:
        raise FormatError(f"non-integer dimension in {hdr_path}") from exc
    if int(scalar("data type")) != 4:
        raise FormatError("only data type 4 (32-bit float) is supported")
    if scalar("interleave").lower() != "bsq":
        raise FormatError("only bsq interleave is supported")
    m = re.search(r"wavelength\s*=\s*\{([^}]*)\}", text, re.IGNORECASE | re.DOTALL)
    if m is None:
        raise AxisError(f"ENVI header {hdr_path} has no wavelength list")
    try:
        wavelengths = [float(v) for v in m.group(1).replace("\n", " ").split(",") if v.strip()]
    except ValueError as exc:
        raise AxisError(f"malformed wavelength list in {hdr_path}") from exc
    return height, width, bands, wavelengths
