import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlrte.angular import build_quadrature
from nlrte.fields import (
    DensityField,
    PhaseSpaceField,
    PhaseSpaceHistory,
    angular_mean,
    angular_mean_field,
)
from nlrte.grids import EvolutionGrid, SpatialGrid


class TestSpatialGrid:
    def test_unit_grid_centers(self):
        grid = SpatialGrid.unit(1, 4)
        assert grid.widths == (0.25,)
        assert np.allclose(grid.centers(0), [0.125, 0.375, 0.625, 0.875])

    def test_two_dimensional(self):
        grid = SpatialGrid((2.0, 1.0), (8, 4))
        assert grid.dimension == 2
        assert grid.widths == (0.25, 0.25)
        assert grid.n_cells == 32
        assert grid.cell_volume == pytest.approx(0.0625)

    def test_rejects_single_cell(self):
        with pytest.raises(ValueError):
            SpatialGrid((1.0,), (1,))

    def test_rejects_three_dimensions(self):
        with pytest.raises(ValueError):
            SpatialGrid((1.0, 1.0, 1.0), (4, 4, 4))


class TestEvolutionGrid:
    def test_levels(self):
        zg = EvolutionGrid(1.0, 4)
        assert zg.dz == 0.25
        assert np.allclose(zg.levels(), [0, 0.25, 0.5, 0.75, 1.0])

    def test_rejects_zero_steps(self):
        with pytest.raises(ValueError):
            EvolutionGrid(1.0, 0)


class TestContainers:
    def test_phase_space_shape_checked(self):
        grid = SpatialGrid.unit(1, 4)
        with pytest.raises(ValueError):
            PhaseSpaceField(grid, np.zeros((5, 2)))

    def test_phase_space_rejects_nan(self):
        grid = SpatialGrid.unit(1, 4)
        values = np.zeros((4, 2))
        values[0, 0] = np.nan
        with pytest.raises(ValueError):
            PhaseSpaceField(grid, values)

    def test_density_shape(self):
        grid = SpatialGrid.unit(1, 4)
        zg = EvolutionGrid(1.0, 3)
        field = DensityField(grid, zg, np.ones((4, 4)))
        assert field.level(2).shape == (4,)
        with pytest.raises(ValueError):
            DensityField(grid, zg, np.ones((3, 4)))

    def test_history_level_view(self):
        grid = SpatialGrid.unit(1, 4)
        zg = EvolutionGrid(1.0, 2)
        hist = PhaseSpaceHistory(grid, zg, np.ones((3, 4, 2)))
        assert isinstance(hist.level(1), PhaseSpaceField)


class TestAngularMean:
    def test_constant_field_measures_circle(self):
        grid = SpatialGrid.unit(2, 3)
        quad = build_quadrature(2, 8)
        field = PhaseSpaceField(grid, np.ones((3, 3, 8)))
        mean = angular_mean_field(field, quad)
        assert np.allclose(mean, 2.0 * np.pi, rtol=1e-14)

    def test_two_point_example(self):
        grid = SpatialGrid.unit(1, 2)
        quad = build_quadrature(1, 2)
        field = PhaseSpaceField(grid, np.array([[1.0, 3.0], [1.0, 3.0]]))
        assert np.allclose(angular_mean_field(field, quad), 4.0)

    def test_first_harmonic_cancels(self):
        quad = build_quadrature(2, 16)
        values = quad.directions[:, 0]  # cos(theta_j)
        assert abs(angular_mean(values, quad.weights)) < 1e-13

    def test_shape_mismatch(self):
        grid = SpatialGrid.unit(1, 2)
        quad = build_quadrature(2, 8)
        field = PhaseSpaceField(grid, np.ones((2, 4)))
        with pytest.raises(ValueError):
            angular_mean_field(field, quad)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_linearity_and_constants(self, alpha, c):
        quad = build_quadrature(2, 12)
        rng = np.random.default_rng(7)
        u = rng.normal(size=12)
        v = rng.normal(size=12)
        lhs = angular_mean(alpha * u + v, quad.weights)
        rhs = alpha * angular_mean(u, quad.weights) + angular_mean(v, quad.weights)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
        assert angular_mean(np.full(12, c), quad.weights) == pytest.approx(
            quad.total_measure * c, rel=1e-13, abs=1e-13)
