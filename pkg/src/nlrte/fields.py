"""Field containers on space x angle x evolution grids.

Layout convention: spatial axes first, angle (when present) fastest,
i.e. phase-space values have shape (*cells, n_directions) and histories
prepend the evolution level.  Containers are treated as immutable once
filled; solvers allocate fresh arrays per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import EvolutionGrid, SpatialGrid


def _require_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class PhaseSpaceField:
    """Intensity W(x, k) at a single evolution level."""

    grid: SpatialGrid
    values: np.ndarray  # shape (*cells, n_directions)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        expected = self.grid.cells
        if values.ndim != len(expected) + 1 or values.shape[:-1] != expected:
            raise ValueError(
                f"phase-space values of shape {values.shape} do not match "
                f"grid cells {expected} plus an angle axis")
        _require_finite(values, "phase-space field")

    @property
    def n_directions(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True, eq=False)
class PhaseSpaceHistory:
    """Intensity history W(z_n, x, k) over all evolution levels."""

    grid: SpatialGrid
    zgrid: EvolutionGrid
    values: np.ndarray  # shape (n_levels, *cells, n_directions)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        expected = (self.zgrid.n_levels,) + self.grid.cells
        if values.shape[:-1] != expected:
            raise ValueError(
                f"history of shape {values.shape} does not match levels x cells "
                f"{expected} plus an angle axis")
        _require_finite(values, "phase-space history")

    @property
    def n_directions(self) -> int:
        return self.values.shape[-1]

    def level(self, n: int) -> PhaseSpaceField:
        return PhaseSpaceField(self.grid, self.values[n])


@dataclass(frozen=True, eq=False)
class DensityField:
    """Scalar field g(z_n, x) on the space-time grid.

    Used both for angular means of transport solutions (the observable
    data of the reconstruction problem) and for scalar diffusion
    solutions.
    """

    grid: SpatialGrid
    zgrid: EvolutionGrid
    values: np.ndarray  # shape (n_levels, *cells)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        expected = (self.zgrid.n_levels,) + self.grid.cells
        if values.shape != expected:
            raise ValueError(
                f"density of shape {values.shape} does not match levels x cells {expected}")
        _require_finite(values, "density field")

    def level(self, n: int) -> np.ndarray:
        return self.values[n]


def angular_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Quadrature of the angle axis: sum_j w_j u[..., j]."""
    values = np.asarray(values)
    weights = np.asarray(weights, dtype=np.float64)
    if values.shape[-1] != weights.shape[0]:
        raise ValueError(
            f"angle axis of length {values.shape[-1]} does not match "
            f"{weights.shape[0]} quadrature weights")
    return values @ weights


def angular_mean_field(field: PhaseSpaceField, quadrature) -> np.ndarray:
    """Cell-wise angular mean <W> = sum_j w_j W_j of one phase-space level."""
    if field.n_directions != quadrature.n_directions:
        raise ValueError("field and quadrature disagree on direction count")
    return angular_mean(field.values, quadrature.weights)


def density_history(history: PhaseSpaceHistory, quadrature) -> DensityField:
    """Angular mean of every level of a phase-space history."""
    if history.n_directions != quadrature.n_directions:
        raise ValueError("history and quadrature disagree on direction count")
    values = angular_mean(history.values, quadrature.weights)
    return DensityField(history.grid, history.zgrid, values)
