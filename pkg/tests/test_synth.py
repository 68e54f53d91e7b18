import numpy as np
import pytest

from hsicube.mask import mask_fraction, remove_background
from hsicube.spectral import Spectrum, red_edge_position
from hsicube.synth import (
    GaussianFeature,
    SynthConfig,
    default_signatures,
    generate_cube,
    generate_dataset,
    read_manifest,
    write_dataset,
)


class TestGenerateCube:
    def test_noise_free_equals_template(self):
        cfg = SynthConfig(bands=64, noise_sigma=0.0, background_fraction=0.0, seed=1)
        cube = generate_cube(cfg, 2, 4, 5)
        template = cfg.class_template(2)
        for r in range(4):
            for c in range(5):
                assert np.array_equal(cube.data[:, r, c], template)

    def test_full_background_all_masked(self):
        cfg = SynthConfig(bands=32, background_fraction=1.0, seed=2)
        cube = generate_cube(cfg, 0, 6, 6)
        cleaned = remove_background(cube, 0.5)
        assert mask_fraction(cleaned) == 1.0

    def test_background_fraction_half(self):
        cfg = SynthConfig(bands=32, background_fraction=0.5, noise_sigma=0.0, seed=3)
        cube = generate_cube(cfg, 0, 4, 4)
        # vegetation template survives at a permissive ratio; background never does
        cleaned = remove_background(cube, 0.95)
        assert mask_fraction(cleaned) == 0.5

    def test_red_edge_centers_separate_classes(self):
        cfg = SynthConfig(
            bands=204,
            red_edge_centers=(710.0, 730.0, 720.0, 705.0),
            noise_sigma=0.0,
            seed=4,
        )
        positions = []
        for cls in (0, 1):
            spec = Spectrum(cfg.wavelengths(), cfg.class_template(cls))
            positions.append(red_edge_position(spec))
        spacing = cfg.wavelengths()[1] - cfg.wavelengths()[0]
        assert abs((positions[1] - positions[0]) - 20.0) <= 2 * spacing

    def test_deterministic_per_seed(self):
        cfg = SynthConfig(bands=32, noise_sigma=0.1, background_fraction=0.3, seed=5)
        a = generate_cube(cfg, 1, 5, 5)
        b = generate_cube(cfg, 1, 5, 5)
        assert np.array_equal(a.data, b.data, equal_nan=True)

    def test_bad_dimensions(self):
        cfg = SynthConfig(bands=16)
        with pytest.raises(ValueError):
            generate_cube(cfg, 0, 0, 4)

    def test_feature_center_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(
                bands=16,
                signatures=((GaussianFeature(2000.0, 5.0, 0.1),),) * 4,
            )

    def test_illumination_jitter_is_per_band_gain(self):
        cfg = SynthConfig(bands=32, noise_sigma=0.0, illumination_jitter=0.3, seed=12)
        cube = generate_cube(cfg, 0, 3, 3)
        template = cfg.class_template(0)
        gains = cube.data[:, 0, 0] / template
        # all pixels of one cube share the same gain vector
        for r in range(3):
            for c in range(3):
                assert np.allclose(cube.data[:, r, c] / template, gains, rtol=1e-12)
        assert np.all(np.abs(gains - 1.0) <= 0.3 + 1e-12)
        assert gains.std() > 0.01  # actually varies across bands

    def test_jitter_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(bands=16, illumination_jitter=-0.1)


class TestGenerateDataset:
    def test_balance_and_labels(self):
        cfg = SynthConfig(bands=16, seed=6)
        ds = generate_dataset(cfg, tiles_per_class=5, tile_size=8)
        assert len(ds) == 20
        for cls in range(4):
            assert (ds.labels == cls).sum() == 5
        assert all(t.shape == (8, 8, 16) for t in ds.tiles)

    def test_deterministic(self):
        cfg = SynthConfig(bands=16, noise_sigma=0.05, seed=7)
        a = generate_dataset(cfg, 3, 6)
        b = generate_dataset(cfg, 3, 6)
        for ta, tb in zip(a.tiles, b.tiles):
            assert np.array_equal(ta.data, tb.data)

    def test_tiles_differ_across_indices(self):
        cfg = SynthConfig(bands=16, noise_sigma=0.05, seed=8)
        ds = generate_dataset(cfg, 2, 6)
        assert not np.array_equal(ds.tiles[0].data, ds.tiles[1].data)

    def test_nearest_template_classifier_is_perfect_on_clean_data(self):
        cfg = SynthConfig(bands=48, noise_sigma=0.02, seed=9)
        ds = generate_dataset(cfg, 6, 5)
        templates = np.stack([cfg.class_template(c) for c in range(4)])
        correct = 0
        for tile, label in zip(ds.tiles, ds.labels):
            mean = tile.foreground_mean_spectrum()
            dists = np.linalg.norm(templates - mean, axis=1)
            correct += int(np.argmin(dists) == label)
        assert correct == len(ds)


class TestManifest:
    def test_write_read_roundtrip(self, tmp_path):
        cfg = SynthConfig(bands=12, noise_sigma=0.05, seed=10)
        ds = generate_dataset(cfg, 2, 6)
        manifest = write_dataset(ds, tmp_path / "data")
        tiles, labels, genotypes = read_manifest(manifest)
        assert len(tiles) == len(ds)
        assert np.array_equal(labels, ds.labels)
        assert all(g == "synthetic" for g in genotypes)
        for a, b in zip(tiles, ds.tiles):
            assert np.allclose(a.data, b.data, atol=1e-6)  # float32 payload

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text("file,cls\nx.raw,0\n")
        with pytest.raises(ValueError):
            read_manifest(p)


def test_default_signatures_cover_four_classes():
    assert len(default_signatures()) == 4
