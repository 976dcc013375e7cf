"""Small-parameter convergence studies: scaled transport versus diffusion.

For a shrinking list of scaling parameters the harness solves the scaled
kinetic problem, solves the matched diffusion problem (diffusivity
assembled from the cell problems, divided by the angular measure so the
density-scale equations agree), and measures

    e(eps) = max over an interior window of | <W_eps>/nu - W_0 |.

The window excludes a fixed fraction of the box next to each wall, where
the kinetic boundary layer lives (its width is O(eps) and spans a finite
part of the box at the largest default eps), and an initial stretch of
the evolution variable where the angular relaxation layer lives.  The
fitted slope of log e against log eps is the measured approximation
order; first-order theory puts it near one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._parallel import ordered_map
from .absorption import AbsorptionModel
from .angular import diffusion_matrix
from .diffusion import (
    DiffusionProblem,
    linear_diffusion_reference,
    solve_semilinear_diffusion,
)
from .fields import DensityField
from .grids import EvolutionGrid, SpatialGrid
from .gridio import write_csv
from .transport import (
    SolverOptions,
    TransportProblem,
    check_condition_ii,
    solve_semilinear_march,
)

DEFAULT_EPSILONS = (0.4, 0.2, 0.1, 0.05)


@dataclass(frozen=True, eq=False)
class ConvergenceStudy:
    """Configuration of one transport-to-diffusion convergence study."""

    base: TransportProblem
    epsilons: tuple = DEFAULT_EPSILONS
    interior_margin: float = 0.3  # fraction of each extent excluded per side
    boundary_cells: int = 2  # never include cells this close to a wall
    initial_layer_factor: float = 5.0  # exclude z < factor * eps^2 (capped)
    max_refinements: int = 3
    richardson_fraction: float = 0.2  # accepted discretization share of e
    solver: SolverOptions = field(default_factory=SolverOptions)
    degenerate: bool = False
    witness_slack: float = 1.0  # c in the degenerate lower-bound check

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("epsilon list must be strictly decreasing")
        if not all(0.0 < e <= 1.0 for e in eps):
            raise ValueError("epsilons must lie in (0, 1]")
        if not 0.0 <= self.interior_margin < 0.5:
            raise ValueError("interior margin must lie in [0, 0.5)")


@dataclass(eq=False)
class StudyResult:
    epsilons: np.ndarray
    errors: np.ndarray
    slope: float  # nan when flagged
    slope_residual: float
    slope_flag: str | None
    refinements: int
    grid: SpatialGrid
    zgrid: EvolutionGrid
    monotone: bool
    condition_margins: np.ndarray  # condition (ii) margin per epsilon
    notes: list
    # degenerate-regime witness: per-epsilon (min density, reference floor)
    witness: np.ndarray | None = None
    witness_ok: bool | None = None

    def table(self) -> list:
        return list(zip(self.epsilons, self.errors))

    def write_csv(self, path) -> None:
        write_csv(path, ["epsilon", "error"], [self.epsilons, self.errors])


def matched_diffusion_problem(problem: TransportProblem) -> DiffusionProblem:
    """Diffusion problem whose solution is the density-scale limit.

    The cell-problem matrix carries the unnormalized angular measure, so
    the density-scale diffusivity is A/nu; the absorption argument is the
    angular mean nu * W.  Fixed by the scattering-only sanity run in the
    tests: both solvers then produce the same heat-equation solution.
    """
    quad = problem.quadrature
    a = diffusion_matrix(problem.phase, quad) / quad.total_measure
    return DiffusionProblem(problem.grid, problem.zgrid, a, problem.sigma_s,
                            problem.absorption, problem.initial,
                            nu=quad.total_measure,
                            absorption_argument="angular_mean")


def _refined_problem(problem: TransportProblem, factor: int) -> TransportProblem:
    """Same continuum problem on a factor-times finer space/evolution grid.

    Sampled fields move to the new cell centers by linear interpolation;
    coefficient histories also interpolate in z when they vary by level.
    """
    if factor == 1:
        return problem
    grid = problem.grid
    new_grid = SpatialGrid(grid.extents, tuple(n * factor for n in grid.cells))
    new_zgrid = EvolutionGrid(problem.zgrid.horizon, problem.zgrid.steps * factor)

    def resample_space(values: np.ndarray) -> np.ndarray:
        out = values
        for axis in range(grid.dimension):
            old = grid.centers(axis)
            new = new_grid.centers(axis)
            out = np.apply_along_axis(
                lambda col: np.interp(new, old, col), axis - grid.dimension, out)
        return out

    initial = resample_space(problem.initial)
    coeff = problem.absorption.coefficients
    n_levels = coeff.shape[1]
    resampled = np.stack([resample_space(coeff[l]) for l in range(coeff.shape[0])])
    if n_levels > 1:
        old_z = problem.zgrid.levels()
        new_z = new_zgrid.levels()
        resampled = np.apply_along_axis(
            lambda col: np.interp(new_z, old_z, col), 1, resampled)
    model = AbsorptionModel(new_grid, new_zgrid, resampled)
    return TransportProblem(new_grid, new_zgrid, problem.quadrature,
                            problem.phase, problem.sigma_s, model, initial,
                            problem.epsilon)


def _window_masks(study: ConvergenceStudy, problem: TransportProblem,
                  eps: float):
    grid, zgrid = problem.grid, problem.zgrid
    cell_masks = []
    for axis in range(grid.dimension):
        x = grid.centers(axis)
        margin = max(study.boundary_cells * grid.widths[axis],
                     study.interior_margin * grid.extents[axis])
        cell_masks.append((x > margin) & (x < grid.extents[axis] - margin))
    mask = cell_masks[0]
    if grid.dimension == 2:
        mask = np.outer(cell_masks[0], cell_masks[1])
    if not np.any(mask):
        raise ValueError("interior window is empty; widen the grid or shrink "
                         "the margin")
    z = zgrid.levels()
    z_min = min(study.initial_layer_factor * eps ** 2, zgrid.horizon / 3.0)
    zmask = z >= z_min
    return zmask, mask


def _windowed_error(study: ConvergenceStudy, problem: TransportProblem,
                    eps: float, w0: np.ndarray) -> float:
    scaled = problem.with_epsilon(eps)
    density = solve_semilinear_march(scaled, study.solver,
                                     keep_history=False).density.values
    m = density / problem.quadrature.total_measure
    zmask, xmask = _window_masks(study, problem, eps)
    return float(np.max(np.abs(m - w0)[zmask][:, xmask])), m


def run_convergence_study(study: ConvergenceStudy) -> StudyResult:
    """Execute the study: refine, sweep the epsilon list, fit the order."""
    notes = []
    margins = []
    for eps in study.epsilons:
        report = check_condition_ii(study.base.absorption, study.base.phase,
                                    study.base.sigma_s, study.base.nu,
                                    study.base.f_sup, eps)
        margins.append(report.margin)
        if not report.passed:
            raise ValueError(
                f"scaled problem at eps={eps} violates the contraction "
                f"condition (margin {report.margin:.3e}); shrink the data")

    problem, refinements = _auto_refine(study, notes)
    w0 = solve_semilinear_diffusion(matched_diffusion_problem(problem),
                                    study.solver).values

    results = ordered_map(
        lambda eps: _windowed_error(study, problem, eps, w0), study.epsilons)
    errors = np.array([r[0] for r in results])

    slope, resid, flag = _fit_slope(study.epsilons, errors)
    monotone = bool(np.all(errors[1:] <= errors[:-1] * 1.10))
    if not monotone:
        notes.append("error sequence is not monotone within 10% slack")

    witness = witness_ok = None
    if study.degenerate:
        witness, witness_ok = _degenerate_witness(study, problem, results)

    return StudyResult(np.asarray(study.epsilons), errors, slope, resid, flag,
                       refinements, problem.grid, problem.zgrid, monotone,
                       np.asarray(margins), notes, witness, witness_ok)


def run_degenerate_study(study: ConvergenceStudy) -> StudyResult:
    """Convergence study in the degenerate-coefficient regime.

    Requires the frozen effective absorption sigma_a at the density bound
    nu*sup f to be strictly positive everywhere; additionally verifies the
    kinetic density stays above the frozen-coefficient diffusion witness
    up to slack * eps.  With non-degenerate coefficients this adds nothing
    beyond run_convergence_study.
    """
    base = study.base
    bound = base.nu * base.f_sup
    coeff_levels = base.absorption.coefficients.shape[1]
    floor = min(float(np.min(base.absorption.sigma_a_field(level, np.float64(bound))))
                for level in range(coeff_levels))
    if floor <= 0.0:
        raise ValueError(
            "degenerate study precondition violated: sigma_a evaluated at "
            f"the density bound {bound:.3g} vanishes somewhere (min {floor:.3e})")
    if not study.degenerate:
        study = replace(study, degenerate=True)
    return run_convergence_study(study)


def _degenerate_witness(study: ConvergenceStudy, problem: TransportProblem,
                        results):
    """Interior minimum of the kinetic density versus the frozen witness."""
    reference = linear_diffusion_reference(matched_diffusion_problem(problem),
                                           options=study.solver).values
    rows = []
    ok = True
    for eps, (_, m) in zip(study.epsilons, results):
        zmask, xmask = _window_masks(study, problem, eps)
        m_min = float(np.min(m[zmask][:, xmask]))
        ref_min = float(np.min(reference[zmask][:, xmask]))
        rows.append((m_min, ref_min))
        if m_min < ref_min - study.witness_slack * eps:
            ok = False
    return np.asarray(rows), ok


def _auto_refine(study: ConvergenceStudy, notes: list):
    """Double the grids until the windowed error at the smallest epsilon is
    grid-converged (Richardson difference below the accepted share)."""
    eps_min = study.epsilons[-1]
    problem = study.base
    level = 0
    w0 = solve_semilinear_diffusion(matched_diffusion_problem(problem),
                                    study.solver).values
    e_coarse, _ = _windowed_error(study, problem, eps_min, w0)
    while level < study.max_refinements:
        candidate = _refined_problem(problem, 2)
        w0_fine = solve_semilinear_diffusion(matched_diffusion_problem(candidate),
                                             study.solver).values
        e_fine, _ = _windowed_error(study, candidate, eps_min, w0_fine)
        if abs(e_fine - e_coarse) <= study.richardson_fraction * max(e_fine, 1e-300):
            return candidate, level + 1
        problem, e_coarse = candidate, e_fine
        level += 1
    notes.append(f"Richardson check still failing after {level} refinements; "
                 "reporting the finest grid")
    warnings.warn(notes[-1], stacklevel=2)
    return problem, level


def _fit_slope(epsilons, errors):
    if len(epsilons) < 3:
        return float("nan"), float("nan"), "insufficient points"
    if np.any(errors <= 0.0):
        return float("nan"), float("nan"), "zero error entries"
    lg = np.log(np.asarray(epsilons))
    le = np.log(errors)
    coef, res = np.polyfit(lg, le, 1), 0.0
    fit = np.polyval(coef, lg)
    res = float(np.sqrt(np.mean((le - fit) ** 2)))
    return float(coef[0]), res, None
