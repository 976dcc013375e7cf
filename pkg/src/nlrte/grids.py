"""Structured grids: axis-aligned spatial boxes and the evolution axis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centered grid on an axis-aligned box.

    Cell centers sit at (i + 1/2) * h along each axis.  Supported
    dimensions are 1 and 2.
    """

    extents: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in self.extents)
        cells = tuple(int(n) for n in self.cells)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells", cells)
        if len(extents) != len(cells):
            raise ValueError("extents and cells must have matching length")
        if len(extents) not in (1, 2):
            raise ValueError(f"unsupported spatial dimension {len(extents)}")
        if any(n < 2 for n in cells):
            raise ValueError("need at least 2 cells per axis")
        if any(e <= 0.0 for e in extents):
            raise ValueError("extents must be positive")

    @classmethod
    def unit(cls, dimension: int, n: int) -> "SpatialGrid":
        """Grid on the unit box (0,1)^d with n cells per axis."""
        return cls((1.0,) * dimension, (n,) * dimension)

    @classmethod
    def box(cls, extent: float, dimension: int, n: int) -> "SpatialGrid":
        return cls((float(extent),) * dimension, (n,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extents, self.cells))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    def centers(self, axis: int = 0) -> np.ndarray:
        h = self.widths[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def center_mesh(self) -> list[np.ndarray]:
        """Cell-center coordinate arrays, broadcastable to the cell shape."""
        return list(np.meshgrid(*(self.centers(a) for a in range(self.dimension)),
                                indexing="ij"))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))


@dataclass(frozen=True)
class EvolutionGrid:
    """Uniform march along the evolution variable z over (0, horizon)."""

    horizon: float
    steps: int

    def __post_init__(self):
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "steps", int(self.steps))
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")

    @property
    def dz(self) -> float:
        return self.horizon / self.steps

    @property
    def n_levels(self) -> int:
        return self.steps + 1

    def levels(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)
