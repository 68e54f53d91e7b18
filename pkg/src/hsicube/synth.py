"""Synthetic hyperspectral data with class-separable planted structure.

Foreground spectra follow a vegetation-like template: low reflectance below
the red edge, a logistic rise to a near-infrared plateau, plus per-class
Gaussian features and i.i.d. noise. Background pixels get alternating-band
spectra whose per-pixel dispersion is half their mean, which is exactly the
background-removal threshold, so they are always masked. Everything is
deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .hypercube import HyperCube, TileSet, WavelengthAxis, save_cube


@dataclass(frozen=True)
class GaussianFeature:
    """A planted spectral feature: center/width in nm, signed amplitude."""

    center_nm: float
    width_nm: float
    amplitude: float


def default_signatures():
    """Four class signatures with distinct absorption/reflection features."""
    return (
        (GaussianFeature(500.0, 8.0, -0.03), GaussianFeature(850.0, 10.0, 0.04)),
        (GaussianFeature(540.0, 8.0, -0.03), GaussianFeature(880.0, 10.0, 0.04)),
        (GaussianFeature(580.0, 8.0, -0.03), GaussianFeature(910.0, 10.0, 0.04)),
        (GaussianFeature(620.0, 8.0, -0.03), GaussianFeature(940.0, 10.0, 0.04)),
    )


@dataclass(frozen=True)
class SynthConfig:
    bands: int = 204
    wavelength_min_nm: float = 400.0
    wavelength_max_nm: float = 1000.0
    num_classes: int = 4
    signatures: tuple = field(default_factory=default_signatures)
    red_edge_centers: tuple = (705.0, 712.0, 720.0, 730.0)
    red_edge_scale_nm: float = 8.0
    base_low: float = 0.05
    base_high: float = 0.45
    noise_sigma: float = 0.0
    background_fraction: float = 0.0
    illumination_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.bands < 2:
            raise ValueError("need at least 2 bands")
        if self.num_classes < 1:
            raise ValueError("need at least one class")
        if len(self.signatures) < self.num_classes or len(self.red_edge_centers) < self.num_classes:
            raise ValueError("signatures and red_edge_centers must cover every class")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0 <= self.background_fraction <= 1):
            raise ValueError("background_fraction must be in [0, 1]")
        if self.illumination_jitter < 0:
            raise ValueError("illumination_jitter must be >= 0")
        lo, hi = self.wavelength_min_nm, self.wavelength_max_nm
        for sig in self.signatures[: self.num_classes]:
            for feat in sig:
                if not (lo <= feat.center_nm <= hi):
                    raise ValueError(f"feature center {feat.center_nm} outside [{lo}, {hi}] nm")

    def wavelengths(self) -> np.ndarray:
        return np.linspace(self.wavelength_min_nm, self.wavelength_max_nm, self.bands)

    def axis(self) -> WavelengthAxis:
        return WavelengthAxis(self.wavelengths())

    def class_template(self, class_id: int) -> np.ndarray:
        """Noise-free foreground spectrum for one class."""
        if not (0 <= class_id < self.num_classes):
            raise ValueError(f"class_id {class_id} out of range")
        wl = self.wavelengths()
        center = self.red_edge_centers[class_id]
        base = self.base_low + (self.base_high - self.base_low) / (
            1.0 + np.exp(-(wl - center) / self.red_edge_scale_nm)
        )
        for feat in self.signatures[class_id]:
            base = base + feat.amplitude * np.exp(
                -((wl - feat.center_nm) ** 2) / (2.0 * feat.width_nm**2)
            )
        return base


def _background_spectra(rng, bands, count):
    """Spectra engineered to trip the dispersion mask: alternating bands at
    zero and a per-pixel amplitude give sigma/mu exactly 1 >= 1/2."""
    amp = rng.uniform(0.2, 1.0, size=count)
    pattern = (np.arange(bands) % 2).astype(np.float64)
    return pattern[:, None] * amp[None, :]


def generate_cube(cfg: SynthConfig, class_id: int, height: int, width: int,
                  rng=None) -> HyperCube:
    """One labeled cube: class template + noise, with planted background."""
    if height <= 0 or width <= 0:
        raise ValueError(f"cube must be non-empty, got {height}x{width}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    template = cfg.class_template(class_id)
    data = np.broadcast_to(template[:, None], (cfg.bands, height * width)).copy()
    if cfg.illumination_jitter > 0:
        # one multiplicative per-band gain vector per cube, mimicking
        # capture-to-capture illumination and band-gain drift
        gain = 1.0 + cfg.illumination_jitter * rng.uniform(-1.0, 1.0, size=cfg.bands)
        data *= gain[:, None]
    if cfg.noise_sigma > 0:
        data += rng.normal(0.0, cfg.noise_sigma, size=data.shape)
    n_bg = int(round(cfg.background_fraction * height * width))
    if n_bg:
        pick = rng.choice(height * width, size=n_bg, replace=False)
        data[:, pick] = _background_spectra(rng, cfg.bands, n_bg)
    return HyperCube(data.reshape(cfg.bands, height, width), cfg.axis())


def generate_dataset(cfg: SynthConfig, tiles_per_class: int, tile_size: int) -> TileSet:
    """Balanced labeled tiles, deterministic per seed (per-tile substreams)."""
    if tiles_per_class < 1:
        raise ValueError("tiles_per_class must be >= 1")
    tiles, origins, labels = [], [], []
    for class_id in range(cfg.num_classes):
        for i in range(tiles_per_class):
            seq = np.random.SeedSequence(cfg.seed, spawn_key=(class_id, i))
            rng = np.random.default_rng(seq)
            tiles.append(generate_cube(cfg, class_id, tile_size, tile_size, rng=rng))
            origins.append((0, 0))
            labels.append(class_id)
    return TileSet(tiles, origins, np.asarray(labels, dtype=np.int64))


def write_dataset(tileset: TileSet, out_dir, genotype: str = "synthetic") -> str:
    """Write tiles as raw-le cubes plus a manifest CSV; returns manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "genotype"])
        for i, (tile, label) in enumerate(zip(tileset.tiles, tileset.labels)):
            name = f"tile_{i:05d}.raw"
            save_cube(tile, os.path.join(out_dir, name), "raw-le")
            writer.writerow([name, int(label), genotype])
    return manifest


def read_manifest(manifest_path):
    """Load a dataset manifest; returns (tiles, labels, genotypes)."""
    from .hypercube import load_cube

    base = os.path.dirname(os.path.abspath(manifest_path))
    tiles, labels, genotypes = [], [], []
    with open(manifest_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["path", "label", "genotype"]:
            raise ValueError(f"{manifest_path}: expected header path,label,genotype")
        for row in reader:
            if not row:
                continue
            path = row[0] if os.path.isabs(row[0]) else os.path.join(base, row[0])
            tiles.append(load_cube(path, "raw-le"))
            labels.append(int(row[1]))
            genotypes.append(row[2] if len(row) > 2 else "")
    return tiles, np.asarray(labels, dtype=np.int64), genotypes
