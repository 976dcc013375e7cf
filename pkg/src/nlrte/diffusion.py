"""Semilinear diffusion solver for the small-parameter limit of transport.

Solves, on the same cell-centered box grids as the kinetic solver,

    dW/dz - div( (A / sigma_s) grad W ) + sigma_a(arg) W = Q,
    W = 0 on the boundary,  W(0) = f,

with A a constant diagonal (or scalar) diffusivity matrix and sigma_a the
polynomial absorption model evaluated either at the point value W or at
the angular-mean surrogate nu * W (the transport-consistent default).

Discretization: backward Euler in z, second-order central differences in
divergence form; the homogeneous Dirichlet wall sits half a cell outside
the first center and is enforced through a quadratic ghost extrapolation,
which keeps the scheme second order in the max norm and monotone.  The
nonlinearity is resolved by an inner fixed-point loop per level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from .absorption import AbsorptionModel
from .errors import NonConvergenceError
from .fields import DensityField
from .grids import EvolutionGrid, SpatialGrid
from .transport import SolverOptions

_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class DiffusionProblem:
    """Data of one semilinear diffusion solve."""

    grid: SpatialGrid
    zgrid: EvolutionGrid
    diffusivity: np.ndarray  # d x d SPD matrix A (off-diagonals must vanish)
    sigma_s: float
    absorption: AbsorptionModel
    initial: np.ndarray
    nu: float = 1.0  # angular measure entering the angular_mean argument
    absorption_argument: str = "angular_mean"  # or "point_value"
    source: np.ndarray | None = None  # optional Q, shape (n_levels, *cells)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.diffusivity, dtype=np.float64))
        object.__setattr__(self, "diffusivity", a)
        initial = np.asarray(self.initial, dtype=np.float64)
        object.__setattr__(self, "initial", initial)
        d = self.grid.dimension
        if a.shape != (d, d):
            raise ValueError(f"diffusivity must be {d}x{d}, got {a.shape}")
        if np.max(np.abs(a - a.T)) > 1e-12 * max(1.0, np.max(np.abs(a))):
            raise ValueError("diffusivity must be symmetric")
        if np.any(np.linalg.eigvalsh(a) <= 0.0):
            raise ValueError("diffusivity must be positive definite")
        off = a - np.diag(np.diag(a))
        if np.max(np.abs(off)) > 1e-14 * max(1.0, np.max(np.abs(a))):
            raise ValueError("only diagonal diffusivity matrices are supported")
        if self.sigma_s <= 0.0:
            raise ValueError("sigma_s must be positive")
        if initial.shape != self.grid.cells:
            raise ValueError("initial condition shape mismatch")
        if np.any(initial < 0.0) or not np.all(np.isfinite(initial)):
            raise ValueError("initial condition must be finite and nonnegative")
        if self.absorption_argument not in ("angular_mean", "point_value"):
            raise ValueError(f"unknown absorption argument {self.absorption_argument!r}")
        if self.source is not None:
            src = np.asarray(self.source, dtype=np.float64)
            if src.shape != (self.zgrid.n_levels,) + self.grid.cells:
                raise ValueError("source shape must be (n_levels, *cells)")
            object.__setattr__(self, "source", src)

    @property
    def argument_factor(self) -> float:
        return self.nu if self.absorption_argument == "angular_mean" else 1.0


def _axis_operator(n: int, scale: float) -> sp.csr_matrix:
    """1-d operator scale * (-d^2/dx^2 * h^2) with Dirichlet walls at the
    half-cell positions, closed by quadratic ghost extrapolation."""
    main = np.full(n, 2.0)
    lower = np.full(n - 1, -1.0)
    upper = np.full(n - 1, -1.0)
    # ghost = -2 u0 + u1/3 reproduces the wall value to third order
    main[0] = 4.0
    upper[0] = -4.0 / 3.0
    main[-1] = 4.0
    lower[-1] = -4.0 / 3.0
    return scale * sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


def _elliptic_operator(problem: DiffusionProblem) -> sp.csr_matrix:
    """Sparse matrix of -div((A/sigma_s) grad), row-major over cells."""
    grid = problem.grid
    diag_a = np.diag(problem.diffusivity) / problem.sigma_s
    ops = []
    for axis in range(grid.dimension):
        n = grid.cells[axis]
        h = grid.widths[axis]
        ops.append(_axis_operator(n, diag_a[axis] / h ** 2))
    if grid.dimension == 1:
        return ops[0]
    nx, ny = grid.cells
    return sp.kron(ops[0], sp.identity(ny, format="csr")) + \
        sp.kron(sp.identity(nx, format="csr"), ops[1])


class _LevelSolver:
    """Solves (1/dz + L + diag(sigma)) w = rhs for varying sigma."""

    def __init__(self, problem: DiffusionProblem):
        self.grid = problem.grid
        self.operator = _elliptic_operator(problem)
        self.n = problem.grid.n_cells

    def solve(self, shift: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        mat = self.operator + sp.diags(shift.reshape(-1))
        if self.grid.dimension == 1:
            banded = np.zeros((3, self.n))
            dense = mat.todia()
            for off, row in zip(dense.offsets, dense.data):
                banded[1 - off] = row
            out = solve_banded((1, 1), banded, rhs.reshape(-1))
        else:
            out = splu(mat.tocsc()).solve(rhs.reshape(-1))
        return out.reshape(self.grid.cells)


def solve_semilinear_diffusion(problem: DiffusionProblem,
                               options: SolverOptions | None = None
                               ) -> DensityField:
    """Backward-Euler march with an inner fixed-point loop on sigma_a."""
    options = options or SolverOptions()
    model = problem.absorption
    factor = problem.argument_factor

    def sigma_at(level, w):
        return model.sigma_a_field(level, factor * np.maximum(w, 0.0))

    return _diffusion_march(problem, sigma_at, options, inner_picard=True)


def linear_diffusion_reference(problem: DiffusionProblem,
                               freeze_density: float | None = None,
                               options: SolverOptions | None = None
                               ) -> DensityField:
    """Linear solve with the absorption frozen at a dominating density.

    The default freeze is the density-scale bound nu * sup f (the largest
    value the transport density can attain), which makes the output a
    pointwise lower bound for the semilinear solution by the comparison
    principle; the degenerate-regime studies use it as their witness.
    """
    options = options or SolverOptions()
    if freeze_density is None:
        freeze_density = problem.argument_factor * float(np.max(problem.initial))
    if freeze_density < 0.0:
        raise ValueError("freeze density must be nonnegative")
    model = problem.absorption
    frozen = np.float64(freeze_density)

    def sigma_at(level, w):
        return model.sigma_a_field(level, frozen) * np.ones(problem.grid.cells)

    return _diffusion_march(problem, sigma_at, options, inner_picard=False)


def _diffusion_march(problem: DiffusionProblem, sigma_at, options: SolverOptions,
                     inner_picard: bool) -> DensityField:
    zgrid = problem.zgrid
    dz = zgrid.dz
    solver = _LevelSolver(problem)
    values = np.empty((zgrid.n_levels,) + problem.grid.cells)
    values[0] = problem.initial
    w = problem.initial.copy()
    for n in range(zgrid.steps):
        level = n + 1
        rhs = w / dz
        if problem.source is not None:
            rhs = rhs + problem.source[level]
        w_est = w
        for _ in range(options.max_picard):
            sigma = sigma_at(level, w_est)
            w_new = solver.solve(1.0 / dz + sigma, rhs)
            rel = float(np.max(np.abs(w_new - w_est))) / max(
                float(np.max(np.abs(w_new))), _TINY)
            w_est = w_new
            if not inner_picard or rel <= options.tol_picard:
                break
        else:
            raise NonConvergenceError(
                f"diffusion inner loop at level {level} exceeded "
                f"{options.max_picard} iterations (last change {rel:.3e})",
                residuals=[rel])
        w = w_est
        values[level] = w
    return DensityField(problem.grid, zgrid, values)
