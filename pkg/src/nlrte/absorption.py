"""Polynomial absorption models with spatially varying coefficients.

The effective absorption at density m is sigma_a(m) = sum_l c_l(z, x) m^l.
Coefficient fields are sampled on the space-time grid; a singleton level
axis means "constant in z" and broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import EvolutionGrid, SpatialGrid


@dataclass(frozen=True, eq=False)
class AbsorptionModel:
    """Coefficient fields c_l(z, x), l = 0..order, all nonnegative."""

    grid: SpatialGrid
    zgrid: EvolutionGrid
    coefficients: np.ndarray  # (order+1, n_levels or 1, *cells)

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=np.float64)
        cells = self.grid.cells
        expected_nd = 2 + len(cells)
        if coeff.ndim != expected_nd or coeff.shape[2:] != cells:
            raise ValueError(
                f"coefficients of shape {coeff.shape} do not match "
                f"(orders, levels, *{cells})")
        if coeff.shape[1] not in (1, self.zgrid.n_levels):
            raise ValueError(
                f"level axis must be 1 or {self.zgrid.n_levels}, got {coeff.shape[1]}")
        if not np.all(np.isfinite(coeff)):
            raise ValueError("coefficients contain non-finite entries")
        if np.any(coeff < 0.0):
            raise ValueError("absorption coefficients must be nonnegative")
        object.__setattr__(self, "coefficients", coeff)

    @classmethod
    def from_constants(cls, values, grid: SpatialGrid,
                       zgrid: EvolutionGrid) -> "AbsorptionModel":
        values = np.asarray(values, dtype=np.float64)
        shape = (len(values), 1) + grid.cells
        coeff = np.broadcast_to(values.reshape((-1,) + (1,) * (len(grid.cells) + 1)),
                                shape).copy()
        return cls(grid, zgrid, coeff)

    @classmethod
    def from_fields(cls, fields, grid: SpatialGrid,
                    zgrid: EvolutionGrid) -> "AbsorptionModel":
        """Stack per-order fields; each may be (cells) or (levels, *cells)."""
        stacked = []
        for f in fields:
            f = np.asarray(f, dtype=np.float64)
            if f.shape == grid.cells:
                f = f[None]
            stacked.append(f)
        levels = max(f.shape[0] for f in stacked)
        stacked = [np.broadcast_to(f, (levels,) + grid.cells) for f in stacked]
        return cls(grid, zgrid, np.stack(stacked))

    @property
    def order(self) -> int:
        return self.coefficients.shape[0] - 1

    def _level(self, z_index: int) -> np.ndarray:
        if self.coefficients.shape[1] == 1:
            return self.coefficients[:, 0]
        return self.coefficients[:, z_index]

    def sigma_a_field(self, z_index: int, m: np.ndarray) -> np.ndarray:
        """Horner evaluation of sigma_a(m) over the cell grid at one level."""
        m = np.asarray(m, dtype=np.float64)
        if np.any(m < 0.0):
            raise ValueError("density argument of sigma_a must be nonnegative")
        coeff = self._level(z_index)
        out = coeff[-1] * np.ones_like(m)
        for l in range(self.order - 1, -1, -1):
            out = out * m + coeff[l]
        return out

    def sigma_a_prime_field(self, z_index: int, m: np.ndarray) -> np.ndarray:
        """Derivative sum_{s>=1} s c_s m^(s-1) over the cell grid."""
        m = np.asarray(m, dtype=np.float64)
        if np.any(m < 0.0):
            raise ValueError("density argument of sigma_a' must be nonnegative")
        coeff = self._level(z_index)
        if self.order == 0:
            return np.zeros(np.broadcast_shapes(m.shape, coeff[0].shape))
        out = self.order * coeff[self.order] * np.ones_like(m)
        for s in range(self.order - 1, 0, -1):
            out = out * m + s * coeff[s]
        return out * np.ones_like(coeff[0])

    def max_coefficient_fields(self) -> np.ndarray:
        """sup over (z, x) of each coefficient, shape (order+1,)."""
        return self.coefficients.max(axis=tuple(range(1, self.coefficients.ndim)))

    def min_coefficient_fields(self) -> np.ndarray:
        return self.coefficients.min(axis=tuple(range(1, self.coefficients.ndim)))


def sigma_a_eval(model: AbsorptionModel, z_index: int, cell, m: float) -> float:
    """Pointwise sigma_a(m) at one level and cell."""
    if m < 0.0:
        raise ValueError("density argument of sigma_a must be nonnegative")
    coeff = model._level(z_index)[(slice(None),) + _cell_index(cell)]
    out = coeff[-1]
    for l in range(model.order - 1, -1, -1):
        out = out * m + coeff[l]
    return float(out)


def sigma_a_prime(model: AbsorptionModel, z_index: int, cell, m: float) -> float:
    """Pointwise derivative of sigma_a at one level and cell."""
    if m < 0.0:
        raise ValueError("density argument of sigma_a' must be nonnegative")
    if model.order == 0:
        return 0.0
    coeff = model._level(z_index)[(slice(None),) + _cell_index(cell)]
    out = model.order * coeff[model.order]
    for s in range(model.order - 1, 0, -1):
        out = out * m + s * coeff[s]
    return float(out)


def _cell_index(cell):
    if isinstance(cell, (tuple, list)):
        return tuple(int(c) for c in cell)
    return (int(cell),)
