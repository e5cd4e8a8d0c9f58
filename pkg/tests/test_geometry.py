import numpy as np
import pytest

from ppcov.errors import InputDataError, NumericalError
from ppcov.geometry import (
    CovariateGrid,
    GridGeometry,
    ObservationWindow,
    PointPattern,
    build_spatial_distribution,
    covariate_at,
    quadrature,
    resample_to_mesh,
    window_area,
)


def grid_for(func, cells=64, bounds=(0.0, 1.0, 0.0, 1.0)):
    window = ObservationWindow.rectangle(*bounds, cells=cells)
    return CovariateGrid.from_function(window.geometry, func), window


class TestWindowArea:
    def test_unit_square(self):
        window = ObservationWindow.rectangle(0, 1, 0, 1, cells=16)
        assert window_area(window) == pytest.approx(1.0)

    def test_half_mask(self):
        geometry = GridGeometry.from_bounds(0, 1, 0, 1, cells=16)
        mask = np.zeros((16, 16), dtype=bool)
        mask[:, :8] = True
        window = ObservationWindow.for_geometry(geometry, mask=mask)
        assert window_area(window) == pytest.approx(0.5)

    def test_survey_region(self):
        # 330 km x 394 km observation rectangle.
        window = ObservationWindow.rectangle(0, 330, 0, 394, cells=128)
        assert window_area(window) == pytest.approx(130020.0)

    def test_empty_mask_rejected(self):
        geometry = GridGeometry.from_bounds(0, 1, 0, 1, cells=4)
        with pytest.raises(InputDataError, match="zero area"):
            ObservationWindow.for_geometry(geometry, mask=np.zeros((4, 4), dtype=bool))

    def test_degenerate_rectangle_rejected(self):
        with pytest.raises(InputDataError):
            ObservationWindow.rectangle(1, 1, 0, 1, cells=4)


class TestCovariateAt:
    def test_linear_field_exact(self):
        grid, window = grid_for(lambda x, y: x, cells=101)
        assert covariate_at(grid, window, 0.30, 0.70) == pytest.approx(0.30, abs=1e-12)

    def test_cell_center_identity(self):
        grid, window = grid_for(lambda x, y: np.sin(7 * x) + y**2, cells=33)
        geom = grid.geometry
        xc = geom.x_centers[5]
        yc = geom.y_centers[21]
        assert covariate_at(grid, window, xc, yc) == pytest.approx(
            grid.values[21, 5], rel=1e-14
        )

    def test_two_by_two_bilinear(self):
        # Centers at (0,0), (1,0), (0,1), (1,1) carrying 0, 1, 2, 3.
        geometry = GridGeometry(nrows=2, ncols=2, x_origin=-0.5, y_origin=-0.5, cellsize=1.0)
        grid = CovariateGrid(geometry, np.array([[0.0, 1.0], [2.0, 3.0]]))
        window = ObservationWindow.for_geometry(geometry)
        wx = wy = 0.25
        by_hand = (
            (1 - wx) * (1 - wy) * 0.0
            + wx * (1 - wy) * 1.0
            + (1 - wx) * wy * 2.0
            + wx * wy * 3.0
        )
        assert covariate_at(grid, window, 0.25, 0.25) == pytest.approx(by_hand)
        assert by_hand == pytest.approx(0.75)

    def test_linear_fields_exact_in_interior(self, rng):
        grid, window = grid_for(lambda x, y: 2.0 * x - 3.0 * y + 0.7, cells=50)
        half = grid.geometry.cellsize / 2
        x = rng.uniform(half, 1 - half, size=200)
        y = rng.uniform(half, 1 - half, size=200)
        got = covariate_at(grid, window, x, y)
        np.testing.assert_allclose(got, 2.0 * x - 3.0 * y + 0.7, atol=1e-12)

    def test_outside_window_rejected(self):
        grid, window = grid_for(lambda x, y: x)
        with pytest.raises(InputDataError, match="outside"):
            covariate_at(grid, window, 1.5, 0.5)

    def test_nodata_neighbors_renormalized(self):
        geometry = GridGeometry(nrows=2, ncols=2, x_origin=-0.5, y_origin=-0.5, cellsize=1.0)
        values = np.array([[0.0, 1.0], [2.0, np.nan]])
        grid = CovariateGrid(geometry, values)
        window = ObservationWindow.for_geometry(geometry)
        wx = wy = 0.25
        weights = np.array([(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy])
        expected = weights @ np.array([0.0, 1.0, 2.0]) / weights.sum()
        assert covariate_at(grid, window, 0.25, 0.25) == pytest.approx(expected)

    def test_all_nodata_neighbors_fall_back_to_nearest(self):
        geometry = GridGeometry.from_bounds(0, 1, 0, 1, cells=4)
        values = np.full((4, 4), np.nan)
        values[0, 0] = 7.5
        grid = CovariateGrid(geometry, values)
        window = ObservationWindow.for_geometry(geometry)
        assert covariate_at(grid, window, 0.9, 0.9) == pytest.approx(7.5)

    def test_entirely_nodata_rejected(self):
        geometry = GridGeometry.from_bounds(0, 1, 0, 1, cells=4)
        grid = CovariateGrid(geometry, np.full((4, 4), np.nan))
        window = ObservationWindow.for_geometry(geometry)
        with pytest.raises((NumericalError, InputDataError)):
            covariate_at(grid, window, 0.5, 0.5)


class TestSpatialDistribution:
    def test_cdf_matches_area_fraction(self, mesh256):
        grid, window = mesh256
        dist = build_spatial_distribution(grid, window)
        # Count oracle: cells whose center (j + 0.5)/256 is at most 0.3.
        count = sum(1 for j in range(256) if (j + 0.5) / 256 <= 0.3)
        assert dist.cdf(0.3) == pytest.approx(count / 256)
        assert dist.cdf(0.3) == pytest.approx(0.3, abs=0.01)

    def test_cdf_below_minimum_is_zero(self, dist64):
        assert dist64.cdf(-0.2) == 0.0
        assert dist64.cdf(dist64.sorted_cell_values[0] - 1e-9) == 0.0

    def test_cdf_above_maximum_is_one(self, dist64):
        assert dist64.cdf(2.0) == 1.0

    def test_gstar_integrates_to_window_area(self, dist256):
        total = np.trapezoid(dist256.gstar_values, dist256.z_grid)
        assert total == pytest.approx(1.0, rel=1e-3)

    def test_gstar_integral_for_diagonal_covariate(self):
        grid, window = grid_for(lambda x, y: x + y, cells=256)
        dist = build_spatial_distribution(grid, window)
        total = np.trapezoid(dist.gstar_values, dist.z_grid)
        assert total == pytest.approx(1.0, rel=1e-3)

    def test_gstar_integral_scales_with_area(self):
        grid, window = grid_for(lambda x, y: x, cells=128, bounds=(0.0, 2.0, 0.0, 2.0))
        dist = build_spatial_distribution(grid, window)
        total = np.trapezoid(dist.gstar_values, dist.z_grid)
        assert total == pytest.approx(4.0, rel=1e-3)

    def test_cdf_monotone(self, dist256, rng):
        z = np.sort(rng.uniform(-0.5, 1.5, size=500))
        values = dist256.cdf(z)
        assert np.all(np.diff(values) >= 0)
        assert np.all(np.diff(dist256.cdf(dist256.z_grid)) >= 0)

    def test_gstar_floor_is_positive(self, dist64):
        assert dist64.gstar_floor > 0
        assert dist64.gstar_at(-50.0) == dist64.gstar_floor
        assert np.all(dist64.gstar_values >= dist64.gstar_floor)

    def test_degenerate_covariate_rejected(self):
        grid, window = grid_for(lambda x, y: np.ones_like(x))
        with pytest.raises(NumericalError, match="degenerate covariate"):
            build_spatial_distribution(grid, window)


class TestQuadrature:
    def test_constant_over_unit_square(self):
        _, window = grid_for(lambda x, y: x, cells=64)
        assert quadrature(np.ones((64, 64)), window) == pytest.approx(1.0, abs=1e-12)

    def test_linear_integrand(self, mesh256):
        grid, window = mesh256
        assert quadrature(grid.values, window) == pytest.approx(0.5, abs=1e-3)

    def test_dimension_mismatch_rejected(self, mesh64):
        _, window = mesh64
        with pytest.raises(InputDataError, match="shape"):
            quadrature(np.ones((3, 3)), window)

    def test_refinement_improves_accuracy(self):
        errors = {}
        for cells in (64, 128):
            window = ObservationWindow.rectangle(0, 1, 0, 1, cells=cells)
            xx, yy = window.geometry.center_grids()
            linear = quadrature(xx, window)
            wavy = quadrature(np.sin(np.pi * xx) * np.sin(np.pi * yy), window)
            errors[cells] = (abs(linear - 0.5), abs(wavy - 4.0 / np.pi**2))
        assert errors[128][0] <= errors[64][0] + 1e-12
        assert errors[128][1] < errors[64][1]

    def test_masked_quadrature_counts_only_masked_cells(self):
        geometry = GridGeometry.from_bounds(0, 1, 0, 1, cells=8)
        mask = np.zeros((8, 8), dtype=bool)
        mask[:4, :] = True
        window = ObservationWindow.for_geometry(geometry, mask=mask)
        assert quadrature(np.ones((8, 8)), window) == pytest.approx(0.5)


class TestPointPattern:
    def test_requires_matching_lengths(self):
        with pytest.raises(InputDataError):
            PointPattern(np.array([0.1, 0.2]), np.array([0.3]))

    def test_points_outside_window_detected(self, mesh64):
        _, window = mesh64
        pattern = PointPattern(np.array([0.5, 1.2]), np.array([0.5, 0.5]))
        with pytest.raises(InputDataError, match="outside"):
            pattern.require_inside(window)

    def test_with_covariate_fills_values(self, mesh64):
        grid, window = mesh64
        pattern = PointPattern(np.array([0.25, 0.75]), np.array([0.5, 0.5]))
        filled = pattern.with_covariate(grid, window)
        np.testing.assert_allclose(filled.z, [0.25, 0.75], atol=1e-12)

    def test_empty_pattern(self):
        assert PointPattern.empty().n == 0


class TestResample:
    def test_resample_preserves_linear_covariate(self, mesh64):
        grid, window = mesh64
        new_grid, new_window = resample_to_mesh(grid, window, 32)
        assert new_grid.geometry.shape == (32, 32)
        xx, _ = new_grid.geometry.center_grids()
        np.testing.assert_allclose(new_grid.values, xx, atol=1e-12)
        assert new_window.area == pytest.approx(window.area)

    def test_resample_masked_window(self):
        geometry = GridGeometry.from_bounds(0, 1, 0, 1, cells=16)
        mask = np.zeros((16, 16), dtype=bool)
        mask[:, :8] = True
        window = ObservationWindow.for_geometry(geometry, mask=mask)
        grid = CovariateGrid.from_function(geometry, lambda x, y: x)
        new_grid, new_window = resample_to_mesh(grid, window, 8)
        assert new_window.mask is not None
        assert new_window.area == pytest.approx(0.5)
