"""Direction-space discretization and scattering kernels.

Directions live on the unit sphere S^{d-1} for d in {1, 2}: the two-point
set {+1, -1} in 1-d and uniformly spaced angles on the circle in 2-d.
The angular measure is kept unnormalized throughout: weights sum to the
sphere measure nu (2 in 1-d, 2*pi in 2-d), and every integral over
directions is a plain weighted sum.  Consequently the diffusion matrix
assembled here carries the factor nu/d relative to conventions that
average over the sphere; downstream consumers divide by nu explicitly
where the density-scale equation requires it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularKernelError(RuntimeError):
    """Raised when the mean-zero scattering system cannot be solved."""


@dataclass(frozen=True, eq=False)
class AngularQuadrature:
    """Discrete directions k_j on S^{d-1} with positive weights."""

    dimension: int
    directions: np.ndarray  # (n, d) unit vectors
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        object.__setattr__(self, "directions",
                           np.asarray(self.directions, dtype=np.float64))
        object.__setattr__(self, "weights",
                           np.asarray(self.weights, dtype=np.float64))
        norms = np.linalg.norm(self.directions, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-14:
            raise ValueError("directions must be unit vectors")
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be positive")

    @property
    def n_directions(self) -> int:
        return self.weights.shape[0]

    @property
    def total_measure(self) -> float:
        """nu_{d-1}, the measure of the unit sphere carried by the weights."""
        return float(np.sum(self.weights))


def build_quadrature(dimension: int, n_angles: int = 2) -> AngularQuadrature:
    """Quadrature for S^{d-1}: exact two-point set (d=1) or uniform midpoint
    angles theta_j = 2*pi*(j+1/2)/n with weights 2*pi/n (d=2).

    The midpoint rule integrates trigonometric polynomials of degree < n
    exactly, which covers every analytic kernel used by the cell problems.
    """
    if dimension not in (1, 2):
        raise ValueError(f"unsupported dimension {dimension}; need 1 or 2")
    if n_angles < 2:
        raise ValueError("need at least 2 angles")
    if dimension == 1:
        directions = np.array([[1.0], [-1.0]])
        weights = np.array([1.0, 1.0])
        return AngularQuadrature(1, directions, weights)
    theta = 2.0 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
    directions = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    weights = np.full(n_angles, 2.0 * np.pi / n_angles)
    return AngularQuadrature(2, directions, weights)


@dataclass(frozen=True, eq=False)
class PhaseFunction:
    """Rotation-invariant scattering kernel p(k . k') bound to a quadrature.

    The discrete kernel matrix is row-renormalized at construction so the
    normalization sum_j' w_j' p(k_j, k_j') = 1 holds to round-off; the
    scattering operator then preserves angular means exactly, which the
    diffusion-limit studies rely on.  Bounds theta_lower <= p <= theta_upper
    are cached from the normalized matrix.
    """

    family: str
    anisotropy_g: float
    matrix: np.ndarray  # (n, n), p(k_j, k_j') after row renormalization
    theta_lower: float
    theta_upper: float

    @property
    def n_directions(self) -> int:
        return self.matrix.shape[0]


def _finalize_kernel(family: str, g: float, matrix: np.ndarray,
                     quad: AngularQuadrature) -> PhaseFunction:
    if np.any(matrix <= 0.0):
        raise ValueError("phase function must be strictly positive")
    row_sums = matrix @ quad.weights
    matrix = matrix / row_sums[:, None]
    return PhaseFunction(
        family=family,
        anisotropy_g=float(g),
        matrix=matrix,
        theta_lower=float(matrix.min()),
        theta_upper=float(matrix.max()),
    )


def make_isotropic(quad: AngularQuadrature) -> PhaseFunction:
    """p = 1/nu: every direction equally likely."""
    n = quad.n_directions
    matrix = np.full((n, n), 1.0 / quad.total_measure)
    return _finalize_kernel("isotropic", 0.0, matrix, quad)


def make_linear_anisotropic(g: float, quad: AngularQuadrature) -> PhaseFunction:
    """First-harmonic kernel with mean cosine g.

    d=2: p = (1 + 2 g k.k')/(2*pi), positive only for |g| < 1/2.
    d=1: p(same)=(1+g)/2, p(opposite)=(1-g)/2, positive for |g| < 1.
    """
    g = float(g)
    cos = quad.directions @ quad.directions.T
    if quad.dimension == 2:
        # |g| = 1/2 touches zero only at exact backscatter, which uniform
        # midpoint angles avoid for odd counts; the positivity check below
        # rejects samplings that do hit it
        if abs(g) > 0.5:
            raise ValueError(f"|g|={abs(g)} > 1/2 makes the 2-d kernel non-positive")
        matrix = (1.0 + 2.0 * g * cos) / (2.0 * np.pi)
    else:
        if abs(g) >= 1.0:
            raise ValueError(f"|g|={abs(g)} >= 1 makes the 1-d kernel non-positive")
        matrix = 0.5 * (1.0 + g * cos)
    family = "isotropic" if g == 0.0 else "linear-anisotropic"
    return _finalize_kernel(family, g, matrix, quad)


def make_tabulated(table, quad: AngularQuadrature) -> PhaseFunction:
    """Kernel from a callable of the direction cosine, renormalized row-wise.

    Rotation invariance is structural: entries depend on k_j . k_j' only.
    """
    cos = np.clip(quad.directions @ quad.directions.T, -1.0, 1.0)
    matrix = np.asarray(table(cos), dtype=np.float64)
    p = _finalize_kernel("tabulated", 0.0, matrix, quad)
    g = anisotropy(p, quad)
    return PhaseFunction(p.family, g, p.matrix, p.theta_lower, p.theta_upper)


def scattering_matrix(p: PhaseFunction, quad: AngularQuadrature) -> np.ndarray:
    """Matrix of the discrete scattering operator: K[j, j'] = p(k_j,k_j') w_j'."""
    _check_pair(p, quad)
    return p.matrix * quad.weights[None, :]


def apply_scattering(p: PhaseFunction, quad: AngularQuadrature,
                     values: np.ndarray) -> np.ndarray:
    """(K u)_j = sum_j' w_j' p(k_j, k_j') u_j' over the trailing axis.

    Row normalization makes K reproduce constants; symmetry of p makes it
    preserve the weighted angular mean.
    """
    _check_pair(p, quad)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != quad.n_directions:
        raise ValueError("trailing axis must match the direction count")
    return values @ scattering_matrix(p, quad).T


def anisotropy(p: PhaseFunction, quad: AngularQuadrature) -> float:
    """Mean scattering cosine g = sum_j' w_j' p(k_j, k_j') (k_j . k_j').

    Rotation invariance makes the row value independent of j; the spread
    across rows is asserted below round-off as a kernel sanity check.
    """
    _check_pair(p, quad)
    cos = quad.directions @ quad.directions.T
    per_row = (p.matrix * cos) @ quad.weights
    if np.max(per_row) - np.min(per_row) > 1e-12:
        raise SingularKernelError(
            "kernel is not rotation invariant: anisotropy varies across rows")
    return float(np.mean(per_row))


def solve_cell_problem(p: PhaseFunction, quad: AngularQuadrature,
                       axis: int) -> np.ndarray:
    """Mean-zero solution D of (I - K) D = k . e_axis.

    Solved as a dense bordered system; the Lagrange multiplier vanishes
    because the right-hand side has zero angular mean.  Residual and
    mean-zero defects beyond 1e-12 flag a broken kernel.
    """
    _check_pair(p, quad)
    if axis < 0 or axis >= quad.dimension:
        raise ValueError(f"axis {axis} out of range for dimension {quad.dimension}")
    n = quad.n_directions
    kmat = scattering_matrix(p, quad)
    rhs_vec = quad.directions[:, axis].copy()
    system = np.zeros((n + 1, n + 1))
    system[:n, :n] = np.eye(n) - kmat
    system[:n, n] = 1.0
    system[n, :n] = quad.weights
    rhs = np.concatenate([rhs_vec, [0.0]])
    try:
        solution = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKernelError(f"cell problem for axis {axis} is singular: {exc}")
    d = solution[:n]
    residual = np.max(np.abs((np.eye(n) - kmat) @ d - rhs_vec))
    mean_defect = abs(np.dot(quad.weights, d))
    if residual > 1e-12 or mean_defect > 1e-12:
        raise SingularKernelError(
            f"cell problem residual {residual:.3e} / mean defect {mean_defect:.3e} "
            "exceed 1e-12; phase function is not a valid scattering kernel")
    return d


def diffusion_matrix(p: PhaseFunction, quad: AngularQuadrature) -> np.ndarray:
    """A_ij = sum_m w_m (k_m . e_i) D_j(k_m), symmetric positive definite.

    For rotation-invariant kernels this evaluates to (nu/d)/(1-g) times the
    identity under the unnormalized-measure convention of this package.
    """
    _check_pair(p, quad)
    d = quad.dimension
    cols = [solve_cell_problem(p, quad, j) for j in range(d)]
    a = np.empty((d, d))
    for i in range(d):
        ki = quad.directions[:, i]
        for j in range(d):
            a[i, j] = np.sum(quad.weights * ki * cols[j])
    if np.max(np.abs(a - a.T)) > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise SingularKernelError("assembled diffusion matrix is not symmetric")
    a = 0.5 * (a + a.T)
    if np.any(np.linalg.eigvalsh(a) <= 0.0):
        raise SingularKernelError("assembled diffusion matrix is not positive definite")
    return a


def _check_pair(p: PhaseFunction, quad: AngularQuadrature) -> None:
    if p.n_directions != quad.n_directions:
        raise ValueError("phase function and quadrature disagree on direction count")
