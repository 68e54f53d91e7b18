import numpy as np
import pytest

from hsicube.errors import CoverageError, DimensionError, GridError
from hsicube.hypercube import HyperCube, WavelengthAxis
from hsicube.spectral import (
    PROV_BOTH,
    PROV_FIRST,
    PROV_SECOND,
    BandSelection,
    SGConfig,
    Spectrum,
    central_difference,
    find_extrema_bands,
    intersect_selections,
    red_edge_position,
    savitzky_golay_derivative,
    screen_bands,
)

from reference_impls import brute_intersect


def spectrum(x, y):
    return Spectrum(np.asarray(x, float), np.asarray(y, float))


def uniform_grid(n=31, lo=1.0, hi=16.0):
    return np.linspace(lo, hi, n)


class TestCentralDifference:
    def test_linear_exact_everywhere(self):
        x = np.array([1.0, 2.0, 4.0, 4.5, 7.0])
        d = central_difference(spectrum(x, 3.0 * x + 1.0), 1)
        assert np.allclose(d.values, 3.0, rtol=0, atol=1e-12)

    def test_constant_zero(self):
        x = uniform_grid(11)
        d = central_difference(spectrum(x, np.full(11, 2.5)), 1)
        assert np.array_equal(d.values, np.zeros(11))

    def test_quadratic_exact_interior(self):
        x = np.arange(8.0)
        d = central_difference(spectrum(x, x**2), 1)
        assert np.allclose(d.values[1:-1], 2.0 * x[1:-1], rtol=0, atol=1e-12)

    def test_second_order_is_double_application(self):
        rng = np.random.default_rng(0)
        x = np.sort(rng.uniform(0, 10, size=15))
        y = rng.normal(size=15)
        s = spectrum(x, y)
        d2 = central_difference(s, 2)
        manual = central_difference(central_difference(s, 1), 1)
        assert np.array_equal(d2.values, manual.values)

    def test_wavelengths_preserved(self):
        x = uniform_grid(9)
        d = central_difference(spectrum(x, np.sin(x)), 1)
        assert np.array_equal(d.wavelengths, x)

    def test_too_short(self):
        with pytest.raises(DimensionError):
            central_difference(spectrum([1.0, 2.0], [0.0, 1.0]), 1)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x = np.sort(rng.uniform(0, 5, 20))
        f, g = rng.normal(size=20), rng.normal(size=20)
        a, b = 2.5, -1.25
        lhs = central_difference(spectrum(x, a * f + b * g), 1).values
        rhs = a * central_difference(spectrum(x, f), 1).values + b * central_difference(
            spectrum(x, g), 1
        ).values
        assert np.allclose(lhs, rhs, rtol=1e-12)


class TestSavitzkyGolay:
    def test_cubic_first_derivative_exact(self):
        x = uniform_grid(25, 0.0, 12.0)
        y = 2.0 * x**3 - x
        d = savitzky_golay_derivative(spectrum(x, y), SGConfig(7, 3, 1))
        assert np.allclose(d.values, 6.0 * x**2 - 1.0, atol=1e-9)

    def test_cubic_second_derivative_exact(self):
        x = uniform_grid(25, 0.0, 12.0)
        y = 2.0 * x**3 - x
        d = savitzky_golay_derivative(spectrum(x, y), SGConfig(7, 3, 2))
        assert np.allclose(d.values, 12.0 * x, atol=1e-9)

    def test_boundary_points_also_exact_for_polynomials(self):
        x = uniform_grid(15, -3.0, 3.0)
        y = x**2 + 0.5 * x
        d = savitzky_golay_derivative(spectrum(x, y), SGConfig(9, 2, 1))
        assert abs(d.values[0] - (2 * x[0] + 0.5)) < 1e-9
        assert abs(d.values[-1] - (2 * x[-1] + 0.5)) < 1e-9

    def test_smoother_than_plain_difference_on_noise(self):
        rng = np.random.default_rng(2)
        x = np.linspace(0, 4 * np.pi, 200)
        noise = rng.normal(0, 0.01, size=200)
        y = np.sin(x) + noise
        sg = savitzky_golay_derivative(spectrum(x, y), SGConfig(11, 3, 1))
        cd = central_difference(spectrum(x, y), 1)
        true = np.cos(x)
        assert np.abs(sg.values - true).max() < np.abs(cd.values - true).max()

    def test_non_uniform_grid_rejected(self):
        x = np.array([0.0, 1.0, 2.0, 3.5, 4.0, 5.0, 6.0])
        with pytest.raises(GridError):
            savitzky_golay_derivative(spectrum(x, x), SGConfig(5, 2, 1))

    def test_window_longer_than_data(self):
        x = uniform_grid(5)
        with pytest.raises(DimensionError):
            savitzky_golay_derivative(spectrum(x, x), SGConfig(7, 3, 1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SGConfig(window=4)
        with pytest.raises(ValueError):
            SGConfig(window=5, poly_order=5)
        with pytest.raises(ValueError):
            SGConfig(window=5, poly_order=3, deriv_order=3)
        with pytest.raises(ValueError):
            SGConfig(window=5, poly_order=1, deriv_order=2)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x = uniform_grid(40, 0, 10)
        f, g = rng.normal(size=40), rng.normal(size=40)
        cfg = SGConfig(9, 3, 1)
        lhs = savitzky_golay_derivative(spectrum(x, 1.5 * f - 2.0 * g), cfg).values
        rhs = (
            1.5 * savitzky_golay_derivative(spectrum(x, f), cfg).values
            - 2.0 * savitzky_golay_derivative(spectrum(x, g), cfg).values
        )
        assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


class TestFindExtrema:
    def test_forced_example(self):
        x = np.arange(1.0, 6.0)
        sel = find_extrema_bands(spectrum(x, [0.0, 1.0, 0.0, -1.0, 0.0]), 0.5)
        assert sel.indices.tolist() == [1, 3]

    def test_monotone_empty(self):
        x = np.arange(1.0, 6.0)
        sel = find_extrema_bands(spectrum(x, [0.0, 1.0, 2.0, 3.0, 4.0]), 0.5)
        assert len(sel) == 0

    def test_all_zero_empty(self):
        x = np.arange(1.0, 6.0)
        sel = find_extrema_bands(spectrum(x, np.zeros(5)), 0.5)
        assert len(sel) == 0

    def test_prominence_filters(self):
        x = np.arange(1.0, 8.0)
        y = [0.0, 0.1, 0.0, -1.0, 0.0, 0.05, 0.0]
        assert find_extrema_bands(spectrum(x, y), 0.5).indices.tolist() == [3]
        got = find_extrema_bands(spectrum(x, y), 0.01).indices.tolist()
        assert got == [1, 3, 5]

    def test_scaling_invariant(self):
        rng = np.random.default_rng(4)
        x = uniform_grid(30)
        y = rng.normal(size=30)
        a = find_extrema_bands(spectrum(x, y), 0.3).indices
        b = find_extrema_bands(spectrum(x, 7.5 * y), 0.3).indices
        assert np.array_equal(a, b)

    def test_ratio_validation(self):
        x = uniform_grid(5)
        with pytest.raises(ValueError):
            find_extrema_bands(spectrum(x, np.ones(5)), 0.0)

    def test_provenance_tag(self):
        x = np.arange(1.0, 6.0)
        sel = find_extrema_bands(spectrum(x, [0.0, 1.0, 0.0, -1.0, 0.0]), 0.5, PROV_SECOND)
        assert sel.provenance == (PROV_SECOND, PROV_SECOND)


class TestIntersect:
    def make(self, indices, tag=PROV_FIRST):
        axis = WavelengthAxis(np.linspace(400, 900, 100))
        idx = np.asarray(sorted(indices), dtype=np.int64)
        return BandSelection(axis, idx, (tag,) * idx.size)

    def test_forced_example(self):
        got = intersect_selections(self.make([10, 50]), self.make([11, 90]), 1)
        assert got.indices.tolist() == [10]
        assert got.provenance == (PROV_BOTH,)

    def test_self_intersection_identity(self):
        a = self.make([3, 17, 44])
        got = intersect_selections(a, a, 1)
        assert np.array_equal(got.indices, a.indices)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = rng.choice(100, size=rng.integers(1, 12), replace=False)
            b = rng.choice(100, size=rng.integers(1, 12), replace=False)
            tol = int(rng.integers(0, 4))
            got = intersect_selections(self.make(a), self.make(b), tol)
            assert got.indices.tolist() == sorted(brute_intersect(sorted(a), sorted(b), tol))

    def test_axis_mismatch(self):
        a = self.make([1])
        other = BandSelection(
            WavelengthAxis(np.linspace(500, 900, 100)), np.array([1]), (PROV_FIRST,)
        )
        with pytest.raises(ValueError):
            intersect_selections(a, other, 1)


def logistic_spectrum(center, n=120, lo=600.0, hi=820.0, low=0.05, high=0.45, scale=6.0):
    wl = np.linspace(lo, hi, n)
    vals = low + (high - low) / (1.0 + np.exp(-(wl - center) / scale))
    return Spectrum(wl, vals)


class TestRedEdge:
    def test_logistic_center_recovered(self):
        s = logistic_spectrum(720.0)
        spacing = s.wavelengths[1] - s.wavelengths[0]
        assert abs(red_edge_position(s) - 720.0) <= spacing

    def test_linear_ramp_tie_breaks_low(self):
        # integer-valued grid and y = x make every slope exactly 1.0,
        # producing a true tie across the window
        wl = np.arange(650.0, 800.0, 4.0)
        s = Spectrum(wl, wl.copy())
        got = red_edge_position(s)
        in_range = wl[(wl >= 680) & (wl <= 750)]
        assert got == in_range[0]

    def test_monotone_shift_with_center(self):
        centers = np.linspace(710, 730, 9)
        positions = [red_edge_position(logistic_spectrum(c)) for c in centers]
        assert all(b >= a for a, b in zip(positions, positions[1:]))

    def test_constant_offset_invariant(self):
        s = logistic_spectrum(715.0)
        shifted = Spectrum(s.wavelengths, s.values + 0.2)
        assert red_edge_position(s) == red_edge_position(shifted)

    def test_coverage_error(self):
        wl = np.linspace(400, 500, 30)
        with pytest.raises(CoverageError):
            red_edge_position(Spectrum(wl, np.ones(30)))


class TestScreenBands:
    def axis(self, n=64):
        return np.linspace(400.0, 1000.0, n)

    def cube_with_spectrum(self, values):
        data = np.broadcast_to(np.asarray(values)[:, None, None], (len(values), 4, 4)).copy()
        return HyperCube(data, WavelengthAxis(self.axis(len(values))))

    def test_flat_cube_empty(self):
        cube = self.cube_with_spectrum(np.full(64, 0.3))
        sel = screen_bands([cube], SGConfig(7, 3, 1), 0.3)
        assert len(sel) == 0

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            screen_bands([], SGConfig(7, 3, 1), 0.3)

    def test_planted_feature_recovered(self):
        wl = self.axis(128)
        spacing = wl[1] - wl[0]
        width = 1.2 * spacing
        template = 0.3 - 0.1 * np.exp(-((wl - 700.0) ** 2) / (2 * width**2))
        cube = self.cube_with_spectrum(template)
        sel = screen_bands([cube], SGConfig(5, 3, 1), 0.2, tol_bands=2)
        # first-derivative magnitude peaks at the inflection wavelengths
        expected = [700.0 - width, 700.0 + width]
        for target in expected:
            band = np.argmin(np.abs(wl - target))
            assert np.min(np.abs(sel.indices - band)) <= 1

    def test_all_masked_rejected(self):
        cube = self.cube_with_spectrum(np.full(64, 0.3))
        cube = HyperCube(cube.data, cube.axis, np.zeros((4, 4), dtype=bool))
        with pytest.raises(ValueError):
            screen_bands([cube], SGConfig(7, 3, 1), 0.3)

    def test_sorted_and_tagged_both(self):
        wl = self.axis(128)
        spacing = wl[1] - wl[0]
        width = 1.2 * spacing
        template = (
            0.3
            - 0.1 * np.exp(-((wl - 600.0) ** 2) / (2 * width**2))
            + 0.1 * np.exp(-((wl - 800.0) ** 2) / (2 * width**2))
        )
        sel = screen_bands([self.cube_with_spectrum(template)], SGConfig(5, 3, 1), 0.2, 2)
        assert len(sel) > 0
        assert np.all(np.diff(sel.indices) > 0)
        assert all(p == PROV_BOTH for p in sel.provenance)
