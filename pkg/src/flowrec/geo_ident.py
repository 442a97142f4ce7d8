"""Flow geometry identification from magnitude voxel data.

The boundary radius is found by minimizing

    h^2 sum_i (F_i(R) - m_i)^2  +  alpha * ||R||_{H2}^2

over truncated Fourier radius functions, where F_i(R) is the voxel mean of
a smoothed indicator H_gamma(R(phi(xi)) - |xi|). Smoothing makes the
forward map differentiable, so a projected Gauss-Newton iteration with
backtracking applies; the regularization weight alpha comes either from
an a-priori rule or from the discrepancy principle (largest alpha in a
halving sweep whose data residual is below four times the noise level).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import InadmissibleRadius, NumericalError
from .geometry import GeometryBounds, RadiusFunction, sobolev_weights
from .grids import GridSpec, VoxelGrid

_GL_CACHE: dict = {}


def gauss_legendre_01(order: int):
    """Gauss-Legendre nodes/weights mapped to [0, 1] with unit total weight."""
    if order not in _GL_CACHE:
        n, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = ((n + 1.0) / 2.0, w / 2.0)
    return _GL_CACHE[order]


def smooth_heaviside(x, gamma: float):
    """H_gamma(x) = arctan(x / gamma) / pi + 1/2, values in (0, 1)."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    return np.arctan(np.asarray(x, dtype=float) / gamma) / math.pi + 0.5


def smooth_heaviside_deriv(x, gamma: float):
    """d/dx H_gamma(x) = (1/pi) * gamma / (gamma^2 + x^2)."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    return (gamma / math.pi) / (gamma * gamma + x * x)


@dataclass(frozen=True)
class GeoIdentConfig:
    bounds: GeometryBounds = field(default_factory=lambda: GeometryBounds(0.15, 0.85, 4))
    n_fourier: int = 8
    gamma: float | None = None  # None: gamma = h/8, coupled to the grid
    alpha0: float = 0.1
    quad_order: int = 4
    gn_max_iter: int = 30
    gn_tol: float = 1e-10
    recenter: bool = True
    max_halvings: int = 40

    def __post_init__(self):
        if self.gamma is not None and self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.alpha0 <= 0.0:
            raise ValueError("alpha0 must be positive")
        if self.quad_order < 2:
            raise ValueError("quad_order must be >= 2")
        if self.n_fourier < 0:
            raise ValueError("n_fourier must be >= 0")

    def gamma_for(self, spec: GridSpec) -> float:
        # h/8 keeps the smeared interface well inside one voxel while the
        # residual floor of the smoothed model stays below usable noise
        # levels; the operator remains differentiable for any gamma > 0
        return self.gamma if self.gamma is not None else spec.h / 8.0


@dataclass(frozen=True)
class GeoIdentResult:
    radius: RadiusFunction
    alpha: float
    residual_norm: float
    objective_history: tuple
    iterations: int
    center: tuple = (0.0, 0.0)
    status: str = "converged"
    normal_eq_rel_residual: float = 0.0
    discrepancy_unreachable: bool = False

    def to_dict(self) -> dict:
        return {
            "radius": self.radius.to_dict(),
            "alpha": self.alpha,
            "residual": self.residual_norm,
            "iterations": self.iterations,
            "center": list(self.center),
            "status": self.status,
        }


def barycenter(grid: VoxelGrid) -> tuple:
    """Intensity-weighted mean of the voxel centers (negatives clipped)."""
    w = np.clip(grid.values, 0.0, None)
    total = float(w.sum())
    if total <= 0.0:
        return (0.0, 0.0)
    cx, cy = grid.spec.center_mesh()
    return (float((w * cx).sum() / total), float((w * cy).sum() / total))


def forward_map(
    radius: RadiusFunction, cfg: GeoIdentConfig, spec: GridSpec, center=(0.0, 0.0)
) -> VoxelGrid:
    """Voxel means of the smoothed indicator by tensor Gauss-Legendre quadrature."""
    nodes, weights = gauss_legendre_01(cfg.quad_order)
    vals = _kernels.heaviside_means(
        radius.b0,
        radius.a,
        radius.b,
        spec.origin[0] - center[0],
        spec.origin[1] - center[1],
        spec.h,
        spec.nx,
        spec.ny,
        cfg.gamma_for(spec),
        nodes,
        weights,
    )
    return VoxelGrid(spec, vals, "magnitude")


def forward_with_jacobian(radius, cfg, spec, center=(0.0, 0.0)):
    """Forward voxel means plus their derivative with respect to the
    coefficients [b0, a_1..a_N, b_1..b_N] (same quadrature nodes)."""
    nodes, weights = gauss_legendre_01(cfg.quad_order)
    rad = radius.padded(cfg.n_fourier) if radius.order < cfg.n_fourier else radius
    means, jac = _kernels.heaviside_means_jacobian(
        rad.b0,
        rad.a,
        rad.b,
        spec.origin[0] - center[0],
        spec.origin[1] - center[1],
        spec.h,
        spec.nx,
        spec.ny,
        cfg.gamma_for(spec),
        nodes,
        weights,
        cfg.n_fourier,
    )
    return means, jac


def objective(
    radius: RadiusFunction,
    alpha: float,
    m_grid: VoxelGrid,
    cfg: GeoIdentConfig,
    center=(0.0, 0.0),
) -> float:
    """Discrete L2(D) misfit plus alpha times the squared H2 norm of R."""
    if not radius.is_admissible(cfg.bounds):
        raise InadmissibleRadius("objective evaluated at an inadmissible radius function")
    f = forward_map(radius, cfg, m_grid.spec, center)
    misfit = m_grid.spec.voxel_area * float(np.sum((f.values - m_grid.values) ** 2))
    return misfit + alpha * radius.sobolev_norm_sq(2)


def initial_radius(m_grid: VoxelGrid, cfg: GeoIdentConfig) -> RadiusFunction:
    """Constant start value from the data's area estimate, clamped into the
    admissible band with a safety margin."""
    area = m_grid.spec.voxel_area * float(np.sum(m_grid.values))
    b0 = math.sqrt(max(area, 0.0) / math.pi)
    b0 = min(max(b0, cfg.bounds.r0 + 0.05), cfg.bounds.r1 - 0.05)
    return RadiusFunction(b0, np.zeros(cfg.n_fourier), np.zeros(cfg.n_fourier))


def gauss_newton_minimize(
    m_grid: VoxelGrid,
    alpha: float,
    cfg: GeoIdentConfig,
    r_init: RadiusFunction | None = None,
    center=None,
) -> GeoIdentResult:
    """Projected Gauss-Newton minimization of the Tikhonov functional.

    Steps solve (h^2 J^T J + alpha W) s = h^2 J^T (m - F) - alpha W c in the
    coefficient space; step lengths 1, 1/2, 1/4, ... are tried until the
    objective decreases at an admissible iterate. Terminates on a small
    accepted step, the iteration cap, or line-search underflow.
    """
    spec = m_grid.spec
    if center is None:
        center = barycenter(m_grid) if cfg.recenter else (0.0, 0.0)
    if r_init is None:
        r_init = initial_radius(m_grid, cfg)
    radius = r_init.padded(cfg.n_fourier) if r_init.order < cfg.n_fourier else r_init
    if not radius.is_admissible(cfg.bounds):
        raise InadmissibleRadius("initial radius function is not admissible")

    w_diag = sobolev_weights(cfg.n_fourier, 2)
    h2 = spec.voxel_area
    data = m_grid.values.reshape(-1)

    c = radius.coeff_vector()
    f_vals, jac = forward_with_jacobian(radius, cfg, spec, center)
    resid = data - f_vals.reshape(-1)
    obj = h2 * float(resid @ resid) + alpha * float(np.sum(w_diag * c * c))
    history = [obj]
    status = "max_iter"
    max_rel = 0.0
    iterations = 0

    for _ in range(cfg.gn_max_iter):
        g_mat = h2 * (jac.T @ jac) + alpha * np.diag(w_diag)
        rhs = h2 * (jac.T @ resid) - alpha * (w_diag * c)
        step = np.linalg.solve(g_mat, rhs)
        denom = float(np.linalg.norm(rhs))
        if denom > 0.0:
            max_rel = max(max_rel, float(np.linalg.norm(g_mat @ step - rhs)) / denom)

        lam = 1.0
        accepted = False
        while lam >= 2.0**-30:
            c_try = c + lam * step
            r_try = RadiusFunction.from_coeff_vector(c_try, cfg.n_fourier)
            if r_try.is_admissible(cfg.bounds):
                f_try, jac_try = forward_with_jacobian(r_try, cfg, spec, center)
                resid_try = data - f_try.reshape(-1)
                obj_try = h2 * float(resid_try @ resid_try) + alpha * float(
                    np.sum(w_diag * c_try * c_try)
                )
                if obj_try < obj:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            status = "no-admissible-step"
            break

        c, radius = c_try, r_try
        f_vals, jac, resid, obj = f_try, jac_try, resid_try, obj_try
        history.append(obj)
        iterations += 1
        if float(np.linalg.norm(lam * step)) < cfg.gn_tol:
            status = "converged"
            break

    residual_norm = math.sqrt(h2 * float(resid @ resid))
    return GeoIdentResult(
        radius=radius,
        alpha=alpha,
        residual_norm=residual_norm,
        objective_history=tuple(history),
        iterations=iterations,
        center=tuple(center),
        status=status,
        normal_eq_rel_residual=max_rel,
    )


def choose_alpha_discrepancy(
    m_grid: VoxelGrid,
    delta: float,
    cfg: GeoIdentConfig,
    r_init: RadiusFunction | None = None,
    center=None,
    on_result=None,
) -> GeoIdentResult:
    """Discrepancy principle: the largest alpha in {alpha0 * 2^-n} whose
    residual is <= 4 * delta.

    The sweep halves alpha and warm-starts each minimization from the
    previous minimizer, so the first satisfying alpha is the maximum. When
    no alpha in the sweep reaches the bound, the best attempt (smallest
    residual, larger alpha on ties) is returned with the unreachable flag.
    ``on_result(alpha, result)`` is invoked per sweep step when given.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if center is None:
        center = barycenter(m_grid) if cfg.recenter else (0.0, 0.0)
    warm = r_init
    best = None
    for n in range(cfg.max_halvings + 1):
        alpha = cfg.alpha0 * 2.0**-n
        result = gauss_newton_minimize(m_grid, alpha, cfg, warm, center)
        if on_result is not None:
            on_result(alpha, result)
        warm = result.radius
        if result.residual_norm <= 4.0 * delta:
            return result
        # ties within 1e-12 go to the larger alpha, i.e. the earlier attempt
        if best is None or result.residual_norm < best.residual_norm - 1e-12:
            best = result
    return replace(best, discrepancy_unreachable=True)
