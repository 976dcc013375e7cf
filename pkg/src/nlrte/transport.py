"""Semilinear radiative transport solver.

The phase-space intensity W(z, x, k) on a box with zero inflow obeys

    dW/dz + (1/eps) k . grad W + sigma_a(<W>) W
          + (sigma_s / eps^2) (W - K W) = 0,      W(0) = f(x),

with <W> the unnormalized angular mean and sigma_a the polynomial
absorption model.  eps = 1 is the unscaled equation; small eps drives the
diffusion regime.

Discretization: backward Euler in z; first-order upwind transport in x so
the discrete maximum principle holds; the stationary system at each level
is solved by source iteration (sweep per ordinate with the scattering
source lagged).  The nonlinearity is handled either by lagging sigma_a at
the previous level or by an inner fixed-point loop per level; a global
fixed-point iteration on the density (the operational mirror of the
well-posedness argument) is provided as an independent cross-check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp

from .absorption import AbsorptionModel
from .angular import AngularQuadrature, PhaseFunction, scattering_matrix
from .errors import NonConvergenceError
from .fields import DensityField, PhaseSpaceHistory, angular_mean
from .grids import EvolutionGrid, SpatialGrid

_TINY = 1e-300
_ZERO_COMPONENT = 1e-14


@dataclass(frozen=True, eq=False)
class TransportProblem:
    """Geometry, kernels, coefficients and data of one transport solve."""

    grid: SpatialGrid
    zgrid: EvolutionGrid
    quadrature: AngularQuadrature
    phase: PhaseFunction
    sigma_s: float
    absorption: AbsorptionModel
    initial: np.ndarray  # f(x) >= 0 on cells
    epsilon: float = 1.0

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=np.float64)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "sigma_s", float(self.sigma_s))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if initial.shape != self.grid.cells:
            raise ValueError(f"initial condition shape {initial.shape} does not "
                             f"match grid cells {self.grid.cells}")
        if not np.all(np.isfinite(initial)):
            raise ValueError("initial condition contains non-finite entries")
        if np.any(initial < 0.0):
            raise ValueError("initial condition must be nonnegative")
        if self.sigma_s < 0.0:
            raise ValueError("scattering coefficient must be nonnegative")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.phase.n_directions != self.quadrature.n_directions:
            raise ValueError("phase function and quadrature disagree on directions")
        if self.absorption.grid is not self.grid and \
                self.absorption.grid.cells != self.grid.cells:
            raise ValueError("absorption model lives on a different grid")

    @property
    def nu(self) -> float:
        return self.quadrature.total_measure

    @property
    def f_sup(self) -> float:
        return float(np.max(self.initial))

    def with_epsilon(self, epsilon: float) -> "TransportProblem":
        return replace(self, epsilon=float(epsilon))

    def with_initial(self, initial: np.ndarray) -> "TransportProblem":
        return replace(self, initial=np.asarray(initial, dtype=np.float64))


@dataclass(frozen=True)
class SolverOptions:
    """Iteration tolerances.  All relative, all in the max norm."""

    tol_picard: float = 1e-10
    max_picard: int = 200
    si_tol: float = 1e-12
    si_max: int = 10_000
    nonlinearity: str = "picard"  # per-level treatment: "picard" | "lagged"

    def __post_init__(self):
        if self.tol_picard <= 0.0 or self.si_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.nonlinearity not in ("picard", "lagged"):
            raise ValueError(f"unknown nonlinearity treatment {self.nonlinearity!r}")


@dataclass(frozen=True, eq=False)
class MarchResult:
    history: PhaseSpaceHistory | None
    density: DensityField
    inner_iterations: np.ndarray  # per step
    source_iterations: np.ndarray  # per step, summed over inner loops


@dataclass(frozen=True, eq=False)
class LinearRunResult:
    history: PhaseSpaceHistory | None
    density: DensityField
    source_iterations: np.ndarray


@dataclass(frozen=True, eq=False)
class PicardResult:
    history: PhaseSpaceHistory | None
    density: DensityField  # the fixed point m*
    residuals: np.ndarray  # relative max-norm change per iteration

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def contraction_ratios(self) -> np.ndarray:
        r = self.residuals
        return r[1:] / np.maximum(r[:-1], _TINY)


# ---------------------------------------------------------------------------
# upwind sweeps


@njit("f8[:](f8[:], f8[:], f8)", nogil=True, cache=True)
def _sweep_1d(source, removal, a):
    n = source.shape[0]
    phi = np.empty(n)
    upstream = 0.0  # zero inflow on the upwind boundary
    for i in range(n):
        phi[i] = (source[i] + a * upstream) / (removal[i] + a)
        upstream = phi[i]
    return phi


@njit("f8[:,:](f8[:,:], f8[:,:], f8, f8)", nogil=True, cache=True)
def _sweep_2d(source, removal, ax, ay):
    nx, ny = source.shape
    phi = np.empty((nx, ny))
    for i in range(nx):
        for j in range(ny):
            upx = phi[i - 1, j] if i > 0 else 0.0
            upy = phi[i, j - 1] if j > 0 else 0.0
            phi[i, j] = (source[i, j] + ax * upx + ay * upy) / (removal[i, j] + ax + ay)
    return phi


class _SweepGeometry:
    """Per-direction upwind coefficients and axis orientations."""

    def __init__(self, problem: TransportProblem):
        quad = problem.quadrature
        widths = problem.grid.widths
        eps = problem.epsilon
        self.dimension = problem.grid.dimension
        self.coeffs = []  # |k_axis| / (eps h_axis) per direction
        self.flips = []  # axes to reverse so the march ascends
        for j in range(quad.n_directions):
            k = quad.directions[j]
            a = []
            flip = []
            for axis in range(self.dimension):
                comp = k[axis]
                if abs(comp) < _ZERO_COMPONENT:
                    a.append(0.0)
                    flip.append(False)
                else:
                    a.append(abs(comp) / (eps * widths[axis]))
                    flip.append(comp < 0.0)
            self.coeffs.append(tuple(a))
            self.flips.append(tuple(flip))

    def sweep(self, j: int, source: np.ndarray, removal: np.ndarray) -> np.ndarray:
        sl = tuple(slice(None, None, -1) if f else slice(None) for f in self.flips[j])
        src = np.ascontiguousarray(source[sl])
        rem = np.ascontiguousarray(removal[sl])
        if self.dimension == 1:
            phi = _sweep_1d(src, rem, self.coeffs[j][0])
        else:
            phi = _sweep_2d(src, rem, self.coeffs[j][0], self.coeffs[j][1])
        return phi[sl]


def _source_iteration(base_source: np.ndarray, removal: np.ndarray,
                      scat_coef: float, kmat_t: np.ndarray, geom: _SweepGeometry,
                      phi_start: np.ndarray, options: SolverOptions
                      ) -> tuple[np.ndarray, int]:
    """Solve (removal + advection) phi - scat_coef * K phi = base_source."""
    n_k = base_source.shape[-1]
    phi = phi_start
    prev_res = None
    for it in range(1, options.si_max + 1):
        if scat_coef > 0.0:
            scat = scat_coef * (phi @ kmat_t)
            total = base_source + scat
        else:
            total = base_source
        phi_new = np.empty_like(phi)
        for j in range(n_k):
            phi_new[..., j] = geom.sweep(j, total[..., j], removal)
        res = float(np.max(np.abs(phi_new - phi)))
        scale = max(float(np.max(np.abs(phi_new))), _TINY)
        rho = res / prev_res if (prev_res is not None and prev_res > 0.0) else None
        if rho is not None and rho < 1.0:
            err_est = res * rho / (1.0 - rho)
        else:
            err_est = res
        phi = phi_new
        if err_est <= options.si_tol * scale or res == 0.0:
            return phi, it
        prev_res = res
    raise NonConvergenceError(
        f"source iteration exceeded {options.si_max} sweeps "
        f"(last residual {res:.3e}, contraction estimate {rho})",
        residuals=[res], contraction=rho)


# ---------------------------------------------------------------------------
# marching solvers


def _march(problem: TransportProblem, sigma_at_level, options: SolverOptions,
           keep_history: bool, inner_picard: bool):
    """Backward-Euler march shared by the linear and semilinear drivers.

    sigma_at_level(level, m_estimate) returns the absorption field used at
    that level; for linear runs it ignores m_estimate.
    """
    grid, zgrid, quad = problem.grid, problem.zgrid, problem.quadrature
    dz = zgrid.dz
    scat_coef = problem.sigma_s / problem.epsilon ** 2
    kmat_t = scattering_matrix(problem.phase, quad).T.copy()
    geom = _SweepGeometry(problem)

    phi = np.broadcast_to(problem.initial[..., None],
                          grid.cells + (quad.n_directions,)).copy()
    density = np.empty((zgrid.n_levels,) + grid.cells)
    density[0] = angular_mean(phi, quad.weights)
    history = None
    if keep_history:
        history = np.empty((zgrid.n_levels,) + grid.cells + (quad.n_directions,))
        history[0] = phi

    inner_counts = np.zeros(zgrid.steps, dtype=np.int64)
    si_counts = np.zeros(zgrid.steps, dtype=np.int64)

    for n in range(zgrid.steps):
        level = n + 1
        base_source = phi / dz
        m_est = density[n]
        phi_new = phi
        for inner in range(1, options.max_picard + 1):
            sigma = sigma_at_level(level, m_est)
            removal = 1.0 / dz + sigma + scat_coef
            phi_new, its = _source_iteration(base_source, removal, scat_coef,
                                             kmat_t, geom, phi_new, options)
            si_counts[n] += its
            inner_counts[n] = inner
            m_new = angular_mean(phi_new, quad.weights)
            if not inner_picard:
                m_est = m_new
                break
            rel = float(np.max(np.abs(m_new - m_est))) / max(
                float(np.max(np.abs(m_new))), _TINY)
            m_est = m_new
            if rel <= options.tol_picard:
                break
        else:
            raise NonConvergenceError(
                f"inner fixed-point loop at level {level} exceeded "
                f"{options.max_picard} iterations (last change {rel:.3e})",
                residuals=[rel])
        phi = phi_new
        density[level] = m_est
        if keep_history:
            history[level] = phi

    hist = PhaseSpaceHistory(grid, zgrid, history) if keep_history else None
    dens = DensityField(grid, zgrid, density)
    return hist, dens, inner_counts, si_counts


def solve_linear_sigma(problem: TransportProblem, sigma_levels,
                       options: SolverOptions | None = None,
                       keep_history: bool = True) -> LinearRunResult:
    """Linear transport with a prescribed absorption field per level.

    sigma_levels is indexable by level (array of shape (n_levels, *cells),
    a broadcastable scalar array, or a callable level -> field).
    """
    options = options or SolverOptions()
    if callable(sigma_levels):
        fetch = sigma_levels
    else:
        sig = np.asarray(sigma_levels, dtype=np.float64)
        def fetch(level):
            return sig[level] if sig.ndim == len(problem.grid.cells) + 1 else sig
    hist, dens, _, si = _march(problem, lambda level, m: fetch(level), options,
                               keep_history, inner_picard=False)
    return LinearRunResult(hist, dens, si)


def solve_linear_frozen(problem: TransportProblem, m,
                        options: SolverOptions | None = None,
                        keep_history: bool = True) -> LinearRunResult:
    """Linear transport with absorption frozen at a trial density history m.

    Realizes the map behind the fixed-point construction: the returned
    density is F(m) when averaged.  m must be nonnegative with one entry
    per level and cell.
    """
    values = m.values if isinstance(m, DensityField) else np.asarray(m, dtype=np.float64)
    expected = (problem.zgrid.n_levels,) + problem.grid.cells
    if values.shape != expected:
        raise ValueError(f"trial density shape {values.shape} != {expected}")
    if np.any(values < 0.0):
        raise ValueError("trial density must be nonnegative")
    model = problem.absorption
    return solve_linear_sigma(
        problem, lambda level: model.sigma_a_field(level, values[level]),
        options, keep_history)


def apply_F(problem: TransportProblem, m,
            options: SolverOptions | None = None) -> DensityField:
    """Density-to-density map m -> <phi(m)> of the frozen linear solve."""
    return solve_linear_frozen(problem, m, options, keep_history=False).density


def picard_fixed_point(problem: TransportProblem,
                       options: SolverOptions | None = None,
                       keep_history: bool = True) -> PicardResult:
    """Global fixed-point iteration on the density.

    Starts from the initial density replicated across levels (inside the
    invariant set of the contraction argument) and applies the frozen
    linear solve until the relative max-norm change drops below
    tol_picard.  Warns, but does not refuse, when neither well-posedness
    condition holds.
    """
    options = options or SolverOptions()
    _warn_if_unverified(problem)
    m = np.broadcast_to(problem.nu * problem.initial,
                        (problem.zgrid.n_levels,) + problem.grid.cells).copy()
    residuals = []
    for _ in range(options.max_picard):
        run = solve_linear_frozen(problem, m, options, keep_history=False)
        m_new = run.density.values
        rel = float(np.max(np.abs(m_new - m))) / max(float(np.max(np.abs(m_new))), _TINY)
        residuals.append(rel)
        m = m_new
        if rel <= options.tol_picard:
            final = solve_linear_frozen(problem, m, options, keep_history)
            return PicardResult(final.history, final.density, np.asarray(residuals))
    raise NonConvergenceError(
        f"fixed-point iteration exceeded {options.max_picard} rounds "
        f"(last change {residuals[-1]:.3e})", residuals=residuals)


def solve_semilinear_march(problem: TransportProblem,
                           options: SolverOptions | None = None,
                           keep_history: bool = True) -> MarchResult:
    """Backward-Euler march with the nonlinearity resolved per level.

    The default re-evaluates sigma_a(<W>) in an inner fixed-point loop at
    each new level; options.nonlinearity = "lagged" uses the previous
    level's density instead (first-order consistent, one solve per step).
    """
    options = options or SolverOptions()
    _warn_if_unverified(problem)
    model = problem.absorption
    hist, dens, inner, si = _march(
        problem, lambda level, m: model.sigma_a_field(level, m), options,
        keep_history, inner_picard=(options.nonlinearity == "picard"))
    return MarchResult(hist, dens, inner, si)


def _warn_if_unverified(problem: TransportProblem) -> None:
    if float(np.min(problem.initial)) == 0.0:
        warnings.warn("initial condition vanishes somewhere; the uniqueness "
                      "argument assumes strictly positive data", stacklevel=3)
    rep_i = check_condition_i(problem.absorption, problem.nu, problem.f_sup)
    rep_ii = check_condition_ii(problem.absorption, problem.phase, problem.sigma_s,
                                problem.nu, problem.f_sup, problem.epsilon)
    if not (rep_i.passed or rep_ii.passed):
        warnings.warn("neither well-posedness condition holds for this problem; "
                      "the fixed-point iteration may not contract", stacklevel=3)


# ---------------------------------------------------------------------------
# well-posedness conditions


@dataclass(frozen=True)
class ConditionReport:
    passed: bool
    bound: float  # the binding admissible sup of f
    margin: float  # bound - f_sup (positive means pass)
    per_order: dict | None = None  # condition (i): bound per polynomial order


def check_condition_i(model: AbsorptionModel, nu: float,
                      f_sup: float) -> ConditionReport:
    """Smallness condition on f: f_sup <= inf c_{k-1} / (nu k c_k) per order k.

    Where the order-k coefficient vanishes the ratio is +inf (the order-k
    constraint is vacuous there): the condition only limits the data where
    order-k absorption is active.
    """
    coeff = model.coefficients
    per_order = {}
    bound = np.inf
    for k in range(1, model.order + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(coeff[k] > 0.0, coeff[k - 1] / (k * coeff[k]), np.inf)
        bound_k = float(np.min(ratio)) / nu
        per_order[k] = bound_k
        bound = min(bound, bound_k)
    return ConditionReport(passed=bool(f_sup <= bound), bound=bound,
                           margin=bound - f_sup, per_order=per_order)


def check_condition_ii(model: AbsorptionModel, phase: PhaseFunction,
                       sigma_s: float, nu: float, f_sup: float,
                       epsilon: float = 1.0) -> ConditionReport:
    """Contraction condition: nu sigma_a'(f_sup) f_sup <= 2 sigma_s theta_lower / eps^2."""
    rhs = 2.0 * sigma_s * phase.theta_lower / epsilon ** 2
    lhs_max = 0.0
    n_coeff_levels = model.coefficients.shape[1]
    for level in range(n_coeff_levels):
        prime = model.sigma_a_prime_field(level, np.float64(f_sup))
        lhs_max = max(lhs_max, float(np.max(prime)) * nu * f_sup)
    if lhs_max == 0.0:
        bound = np.inf
    else:
        bound = f_sup * rhs / lhs_max  # the f_sup that would saturate the bound
    return ConditionReport(passed=bool(lhs_max <= rhs), bound=bound,
                           margin=rhs - lhs_max)


# ---------------------------------------------------------------------------
# analytic oracle for the space-homogeneous problem


def homogeneous_ode_oracle(coefficients, nu: float, f0: float, z):
    """Solution W(z) of dW/dz = -sigma_a(nu W) W with constant coefficients.

    Closed forms for polynomial order <= 1, high-order adaptive
    integration otherwise.  Accepts scalar or array z.
    """
    c = np.asarray(coefficients, dtype=np.float64)
    z_arr = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if np.any(z_arr < 0.0):
        raise ValueError("z must be nonnegative")
    if f0 < 0.0:
        raise ValueError("initial value must be nonnegative")
    if c.ndim != 1 or len(c) == 0:
        raise ValueError("need a flat coefficient list of length order+1")

    if len(c) == 1:
        out = f0 * np.exp(-c[0] * z_arr)
    elif len(c) == 2:
        a, b = c[0], c[1] * nu  # dW/dz = -(a + b W) W
        if a == 0.0:
            out = f0 / (1.0 + b * f0 * z_arr)
        else:
            e = np.exp(-a * z_arr)
            out = a * f0 * e / (a + b * f0 * (1.0 - e))
    else:
        def rhs(_, w):
            m = nu * w[0]
            sigma = 0.0
            for ck in c[::-1]:
                sigma = sigma * m + ck
            return [-sigma * w[0]]
        z_end = float(np.max(z_arr)) if np.max(z_arr) > 0 else 1.0
        sol = solve_ivp(rhs, (0.0, z_end), [float(f0)], t_eval=np.unique(z_arr),
                        method="DOP853", rtol=1e-12, atol=1e-14)
        lookup = dict(zip(sol.t, sol.y[0]))
        out = np.array([f0 if t == 0.0 else lookup[t] for t in z_arr])
    return out[0] if np.isscalar(z) or np.asarray(z).ndim == 0 else out
