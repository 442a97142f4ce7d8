"""Velocity reconstruction on the reference disk.

The velocity is expanded in L2-normalized eigenfunctions of the Dirichlet
Laplacian on the unit disk, psi(r, phi) = nf * J_m(j_mn r) * {cos, sin}(m phi),
which vanish on the boundary by construction and make the smoothness
penalty ||Laplacian v||^2 the diagonal form sum lambda_j^2 c_j^2.

The observation operator maps coefficients to voxel means over the parts of
voxels covered by the reconstructed flow domain; the regularized normal
equations are solved by Cholesky factorization or preconditioned CG, with
the regularization weight chosen by a discrepancy rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import _kernels
from .bessel import bessel_j, bessel_j_prime, bessel_zero
from .errors import EmptyDomainError, NumericalError
from .geometry import DiskTransform, angle_of
from .grids import GridSpec, VoxelGrid

COS, SIN = 0, 1
FIRST_EIGENVALUE = 5.783185962946785  # j_{0,1}^2


class DiskEigenBasis:
    """Dirichlet-Laplacian eigenpairs on the unit disk with eigenvalue <= M.

    Modes are sorted by ascending eigenvalue, cosine before sine at equal
    eigenvalue, lower angular order first on ties; the sine parity is
    excluded for m = 0.
    """

    def __init__(self, cutoff: float):
        if cutoff <= FIRST_EIGENVALUE:
            raise ValueError(f"cutoff must exceed the first eigenvalue {FIRST_EIGENVALUE:.6f}")
        modes = []
        m = 0
        while True:
            j1 = bessel_zero(m, 1)
            if j1 * j1 > cutoff:
                break
            n = 1
            while True:
                j = bessel_zero(m, n)
                lam = j * j
                if lam > cutoff:
                    break
                if m == 0:
                    nf = 1.0 / (math.sqrt(math.pi) * abs(bessel_j(1, j)))
                    modes.append((lam, m, COS, n, j, nf))
                else:
                    nf = math.sqrt(2.0 / math.pi) / abs(bessel_j(m + 1, j))
                    modes.append((lam, m, COS, n, j, nf))
                    modes.append((lam, m, SIN, n, j, nf))
                n += 1
            m += 1
        modes.sort(key=lambda t: (t[0], t[1], t[2]))
        self.cutoff = float(cutoff)
        self.lam = np.array([t[0] for t in modes])
        self.m = np.array([t[1] for t in modes], dtype=np.int64)
        self.parity = np.array([t[2] for t in modes], dtype=np.int64)
        self.n = np.array([t[3] for t in modes], dtype=np.int64)
        self.zero = np.array([t[4] for t in modes])
        self.nf = np.array([t[5] for t in modes])
        self._tables = None

    def __len__(self) -> int:
        return self.lam.size

    def mode_tuples(self):
        return [
            (int(m), int(n), "cos" if p == COS else "sin")
            for m, n, p in zip(self.m, self.n, self.parity)
        ]

    def evaluate(self, r, phi) -> np.ndarray:
        """Exact mode values at polar points; shape (npts, nmodes)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        out = np.empty((r.size, len(self)))
        for j in range(len(self)):
            rad = bessel_j(int(self.m[j]), self.zero[j] * r)
            ang = np.cos(self.m[j] * phi) if self.parity[j] == COS else np.sin(self.m[j] * phi)
            out[:, j] = self.nf[j] * rad * ang
        return out

    def radial_tables(self, ng: int = 8192):
        """Per-mode lookup tables of J_m(j_mn r) on a uniform r-grid.

        Node p holds the value at (p - 1)/ng; the left ghost uses the
        parity identity J_m(-z) = (-1)^m J_m(z), the right ghost is the
        true value just beyond r = 1. Used by the design-matrix kernel.
        """
        if self._tables is None or self._tables.shape[1] != ng + 3:
            tab = np.empty((len(self), ng + 3))
            rg = np.arange(-1, ng + 2) / ng
            for j in range(len(self)):
                tab[j] = bessel_j(int(self.m[j]), self.zero[j] * np.abs(rg))
                if self.m[j] % 2 == 1:
                    tab[j, 0] = -tab[j, 0]
            self._tables = tab
        return self._tables


def build_basis(cutoff: float) -> DiskEigenBasis:
    return DiskEigenBasis(cutoff)


def cutoff_for_mode_count(target: int) -> float:
    """Smallest eigenvalue cutoff that yields at least ``target`` modes."""
    lams = []
    m = 0
    bound = 4.0 * max(target, 4) + 50.0  # Weyl estimate with headroom
    while True:
        j1 = bessel_zero(m, 1)
        if j1 * j1 > bound:
            break
        n = 1
        while True:
            j = bessel_zero(m, n)
            if j * j > bound:
                break
            lams.append(j * j)
            if m > 0:
                lams.append(j * j)
            n += 1
        m += 1
    lams.sort()
    if target > len(lams):
        target = len(lams)
    return lams[target - 1] + 1e-9


@dataclass(frozen=True)
class VelocityCoefficients:
    """Velocity field v = sum_j c_j psi_j on the reference disk."""

    basis: DiskEigenBasis
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.size != len(self.basis):
            raise ValueError("coefficient count does not match basis size")
        object.__setattr__(self, "c", c)

    def eval(self, points) -> np.ndarray:
        """Field values at (n, 2) points of the closed unit disk."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        phi = angle_of(pts[:, 0], pts[:, 1])
        return self.basis.evaluate(r, phi) @ self.c

    def eval_polar_fast(self, r, phi, ng: int = 8192) -> np.ndarray:
        """Table-interpolated evaluation (absolute error ~1e-8), for bulk sampling."""
        tables = self.basis.radial_tables(ng)
        sums = _kernels.design_sums(
            np.asarray(r, dtype=float).ravel(),
            np.asarray(phi, dtype=float).ravel(),
            np.arange(np.size(r), dtype=np.int64),
            np.size(r),
            self.basis.m,
            self.basis.nf,
            self.basis.parity,
            tables,
            ng,
        )
        return (sums @ self.c).reshape(np.shape(r))

    def gradient(self, points) -> np.ndarray:
        """Cartesian gradient at (n, 2) points; the r -> 0 limit is analytic
        (only m = 1 modes contribute at the origin)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        phi = angle_of(pts[:, 0], pts[:, 1])
        at_origin = r < 1e-12
        rs = np.where(at_origin, 1.0, r)
        b = self.basis
        grad = np.zeros((pts.shape[0], 2))
        er = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        ephi = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
        for j in range(len(b)):
            if self.c[j] == 0.0:
                continue
            m, jz, nf = int(b.m[j]), b.zero[j], b.nf[j]
            if b.parity[j] == COS:
                ang, dang = np.cos(m * phi), -m * np.sin(m * phi)
            else:
                ang, dang = np.sin(m * phi), m * np.cos(m * phi)
            d_r = nf * jz * bessel_j_prime(m, jz * r) * ang
            d_t = nf * bessel_j(m, jz * r) / rs * dang
            contrib = d_r[:, None] * er + d_t[:, None] * ephi
            if np.any(at_origin):
                if m == 1:
                    slope = nf * jz * 0.5
                    origin_grad = np.array([slope, 0.0]) if b.parity[j] == COS else np.array(
                        [0.0, slope]
                    )
                else:
                    origin_grad = np.zeros(2)
                contrib[at_origin] = origin_grad
            grad += self.c[j] * contrib
        return grad

    def laplacian_norm_sq(self) -> float:
        """||Laplacian v||^2 = sum lambda_j^2 c_j^2 in the orthonormal basis."""
        return float(np.sum(self.basis.lam**2 * self.c**2))

    def proxy_h2_norm_sq(self) -> float:
        """Equivalent H2 norm on the basis span: sum (1 + lambda + lambda^2) c^2."""
        lam = self.basis.lam
        return float(np.sum((1.0 + lam + lam * lam) * self.c**2))


def project_field(basis: DiskEigenBasis, func, n_radial: int = 256, n_angular: int = 512):
    """L2(B) projection of a callable f(points (n,2)) onto the basis by
    Gauss-Legendre (radial) x trapezoid (angular) quadrature."""
    rn, rw = np.polynomial.legendre.leggauss(n_radial)
    rn = 0.5 * (rn + 1.0)
    rw = 0.5 * rw
    phin = np.arange(n_angular) * (2.0 * math.pi / n_angular)
    R, PHI = np.meshgrid(rn, phin, indexing="ij")
    pts = np.stack([(R * np.cos(PHI)).ravel(), (R * np.sin(PHI)).ravel()], axis=-1)
    fv = np.asarray(func(pts), dtype=float).reshape(n_radial, n_angular)
    w = (rw * rn)[:, None] * (2.0 * math.pi / n_angular)
    coeffs = np.empty(len(basis))
    psi = basis.evaluate(R.ravel(), PHI.ravel())
    coeffs = psi.T @ (fv * w).ravel()
    return coeffs


def project_radial_field(basis: DiskEigenBasis, f_radial, n_quad: int = 1024) -> np.ndarray:
    """Projection of a radially symmetric field onto the basis.

    Only the m = 0 modes carry coefficients, c_n = 2 pi nf int_0^1
    f(r) J_0(j_n r) r dr, evaluated by Gauss-Legendre quadrature.
    ``f_radial`` maps an array of radii to field values.
    """
    gl_n, gl_w = np.polynomial.legendre.leggauss(n_quad)
    r = 0.5 * (gl_n + 1.0)
    w = 0.5 * gl_w
    fv = np.asarray(f_radial(r), dtype=float)
    coeffs = np.zeros(len(basis))
    for j in np.flatnonzero(basis.m == 0):
        coeffs[j] = (
            2.0 * math.pi * basis.nf[j] * float(np.sum(fv * bessel_j(0, basis.zero[j] * r) * r * w))
        )
    return coeffs


def gram_matrix(basis: DiskEigenBasis, n_radial: int = 256, n_angular: int = 512) -> np.ndarray:
    """Quadrature Gram matrix of the basis (identity up to quadrature error)."""
    rn, rw = np.polynomial.legendre.leggauss(n_radial)
    rn = 0.5 * (rn + 1.0)
    rw = 0.5 * rw
    phin = np.arange(n_angular) * (2.0 * math.pi / n_angular)
    R, PHI = np.meshgrid(rn, phin, indexing="ij")
    psi = basis.evaluate(R.ravel(), PHI.ravel())
    w = ((rw * rn)[:, None] * np.full(n_angular, 2.0 * math.pi / n_angular)[None, :]).ravel()
    return psi.T @ (psi * w[:, None])


@dataclass(frozen=True)
class VelocityReconConfig:
    cutoff: float | None = None  # eigenvalue cutoff; None picks it from voxel count
    beta0: float = 1e-2
    subsamples: int = 16
    solver: str = "cholesky"
    cg_tol: float = 1e-12
    cg_max_iter: int = 5000
    table_grid: int = 8192
    max_halvings: int = 40
    min_modes: int = 16
    max_modes: int = 200

    def __post_init__(self):
        if self.beta0 <= 0.0:
            raise ValueError("beta0 must be positive")
        if self.cutoff is not None and self.cutoff <= FIRST_EIGENVALUE:
            raise ValueError("cutoff must exceed the first eigenvalue")
        if self.solver not in ("cholesky", "cg"):
            raise ValueError("solver must be 'cholesky' or 'cg'")


@dataclass
class DesignMatrix:
    """Voxel observation operator restricted to voxels meeting the domain.

    Row i holds the mean of each basis function (pulled back through the
    transform) over the inside-classified subsample points of voxel i;
    ``fractions`` are the corresponding voxel area fractions used as
    weights in the data norm, ``vox_linear`` the ix*ny+iy voxel indices.
    """

    A: np.ndarray
    fractions: np.ndarray
    vox_linear: np.ndarray
    spec: GridSpec
    basis: DiskEigenBasis
    _gram: np.ndarray = field(default=None, repr=False)

    @property
    def weights(self) -> np.ndarray:
        return self.fractions * self.spec.voxel_area

    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = self.A.T @ (self.A * self.weights[:, None])
        return self._gram

    def data_vector(self, grid: VoxelGrid) -> np.ndarray:
        return grid.values.reshape(-1)[self.vox_linear]

    def rhs(self, grid: VoxelGrid) -> np.ndarray:
        return self.A.T @ (self.weights * self.data_vector(grid))

    def residual_norm(self, c: np.ndarray, grid: VoxelGrid) -> float:
        misfit = self.A @ c - self.data_vector(grid)
        return math.sqrt(float(np.sum(self.weights * misfit**2)))


def assemble_design_matrix(
    basis: DiskEigenBasis,
    transform: DiskTransform,
    spec: GridSpec,
    subsamples: int = 16,
    center=(0.0, 0.0),
    table_grid: int = 8192,
) -> DesignMatrix:
    """Build the voxel-mean observation matrix for the given flow geometry.

    Subsample points are classified against the domain boundary exactly as
    the phantom rasterizer does; rows for voxels without interior points
    are dropped.
    """
    s = subsamples
    offs = (np.arange(s) + 0.5) * (spec.h / s)
    xs = (spec.origin[0] - center[0] + np.arange(spec.nx) * spec.h)[:, None] + offs[None, :]
    ys = (spec.origin[1] - center[1] + np.arange(spec.ny) * spec.h)[:, None] + offs[None, :]
    px = np.broadcast_to(xs.reshape(spec.nx, 1, s, 1), (spec.nx, spec.ny, s, s))
    py = np.broadcast_to(ys.reshape(1, spec.ny, 1, s), (spec.nx, spec.ny, s, s))
    rr2 = px * px + py * py
    phi = np.arctan2(py, px)
    rv = transform.radius(phi)
    inside = rr2 < rv * rv

    counts = inside.sum(axis=(2, 3)).reshape(-1)
    retained = np.flatnonzero(counts > 0)
    if retained.size == 0:
        raise EmptyDomainError("no voxel intersects the flow domain")
    fractions = counts[retained] / float(s * s)

    # map every inside point to its retained-row index
    row_of = np.full(spec.nx * spec.ny, -1, dtype=np.int64)
    row_of[retained] = np.arange(retained.size)
    vox_full = np.broadcast_to(
        np.arange(spec.nx * spec.ny).reshape(spec.nx, spec.ny, 1, 1),
        inside.shape,
    )
    pt_rows = row_of[vox_full[inside]]

    rho = np.sqrt(rr2[inside])
    pphi = phi[inside]
    r_ref = transform.inverse_radius(rho, pphi)
    sums = _kernels.design_sums(
        r_ref,
        pphi,
        pt_rows,
        retained.size,
        basis.m,
        basis.nf,
        basis.parity,
        basis.radial_tables(table_grid),
        table_grid,
    )
    A = sums / counts[retained][:, None]
    return DesignMatrix(A, fractions, retained, spec, basis)


def _solve_regularized(design: DesignMatrix, rhs: np.ndarray, beta: float, cfg: VelocityReconConfig):
    """Solve (A^T W A + beta Lam^2) c = rhs; returns (c, rel normal-eq residual)."""
    lam2 = design.basis.lam**2
    G = design.gram() + beta * np.diag(lam2)
    if cfg.solver == "cholesky":
        try:
            cf = linalg.cho_factor(G)
        except linalg.LinAlgError as exc:  # cannot happen for beta > 0
            raise NumericalError(f"regularized normal matrix not SPD: {exc}") from exc
        c = linalg.cho_solve(cf, rhs)
    else:
        c = _pcg(G, rhs, np.diag(G), cfg.cg_tol, cfg.cg_max_iter)
    denom = float(np.linalg.norm(rhs))
    rel = float(np.linalg.norm(G @ c - rhs)) / denom if denom > 0 else 0.0
    return c, rel


def _pcg(G, rhs, diag, tol, max_iter):
    """Jacobi-preconditioned conjugate gradients, deterministic."""
    c = np.zeros_like(rhs)
    r = rhs.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    norm0 = float(np.linalg.norm(rhs))
    if norm0 == 0.0:
        return c
    for _ in range(max_iter):
        gp = G @ p
        alpha = rz / float(p @ gp)
        c += alpha * p
        r -= alpha * gp
        if float(np.linalg.norm(r)) <= tol * norm0:
            break
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return c


@dataclass(frozen=True)
class VelocityReconInfo:
    beta: float
    residual: float
    normal_eq_rel_residual: float
    sweep_betas: tuple = ()
    sweep_residuals: tuple = ()
    discrepancy_unreachable: bool = False


def reconstruct_velocity(
    u_grid: VoxelGrid,
    transform: DiskTransform,
    beta: float,
    cfg: VelocityReconConfig = VelocityReconConfig(),
    center=(0.0, 0.0),
    design: DesignMatrix | None = None,
):
    """Tikhonov solution for fixed regularization weight beta > 0."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if design is None:
        design = _default_design(u_grid, transform, cfg, center)
    rhs = design.rhs(u_grid)
    c, rel = _solve_regularized(design, rhs, beta, cfg)
    coeffs = VelocityCoefficients(design.basis, c)
    info = VelocityReconInfo(beta, design.residual_norm(c, u_grid), rel)
    return coeffs, info, design


def _default_design(u_grid, transform, cfg, center):
    if cfg.cutoff is not None:
        basis = DiskEigenBasis(cfg.cutoff)
    else:
        # pick the cutoff so the mode count stays about a quarter of the
        # retained-voxel count (clamped), keeping the least squares problem
        # comfortably overdetermined
        spec = u_grid.spec
        frac = _kernels.rasterize_fractions(
            transform.radius.b0,
            transform.radius.a,
            transform.radius.b,
            spec.origin[0] - center[0],
            spec.origin[1] - center[1],
            spec.h,
            spec.nx,
            spec.ny,
            cfg.subsamples,
        )
        n_retained = int(np.count_nonzero(frac))
        if n_retained == 0:
            raise EmptyDomainError("no voxel intersects the flow domain")
        target = int(np.clip(n_retained // 4, cfg.min_modes, cfg.max_modes))
        basis = DiskEigenBasis(cutoff_for_mode_count(target))
    return assemble_design_matrix(
        basis, transform, u_grid.spec, cfg.subsamples, center, cfg.table_grid
    )


def choose_beta_discrepancy(
    u_grid: VoxelGrid,
    transform: DiskTransform,
    delta_u: float,
    cfg: VelocityReconConfig = VelocityReconConfig(),
    center=(0.0, 0.0),
    design: DesignMatrix | None = None,
):
    """Largest beta in the halving sweep beta0 * 2^-n whose weighted data
    residual is <= 2 * delta_u.

    The residual is non-decreasing in beta (checked along the sweep); when
    even the smallest beta misses the bound the best attempt is returned
    with the unreachable flag set.
    """
    if delta_u <= 0.0:
        raise ValueError("delta_u must be positive")
    if design is None:
        design = _default_design(u_grid, transform, cfg, center)
    rhs = design.rhs(u_grid)

    betas, residuals, sols = [], [], []
    best = None
    for n in range(cfg.max_halvings + 1):
        beta = cfg.beta0 * 2.0**-n
        c, rel = _solve_regularized(design, rhs, beta, cfg)
        res = design.residual_norm(c, u_grid)
        betas.append(beta)
        residuals.append(res)
        sols.append((c, rel))
        if len(residuals) >= 2 and residuals[-1] > residuals[-2] * (1.0 + 1e-9) + 1e-14:
            raise NumericalError("data residual increased while beta decreased")
        if res <= 2.0 * delta_u:
            best = n
            break
        if best is None or res < residuals[best]:
            best = n
    c, rel = sols[best]
    unreachable = residuals[best] > 2.0 * delta_u
    info = VelocityReconInfo(
        betas[best],
        residuals[best],
        rel,
        tuple(betas),
        tuple(residuals),
        unreachable,
    )
    return VelocityCoefficients(design.basis, c), info, design


def compute_delta_u(delta_r: float, eps: float, c_const: float = 1.0, u3_bound: float = 1.0):
    """A-priori reference-domain data error C * (delta_R^(1/2) * U3 + eps)."""
    if delta_r < 0.0 or eps < 0.0:
        raise ValueError("noise levels must be >= 0")
    return c_const * (math.sqrt(delta_r) * u3_bound + eps)
