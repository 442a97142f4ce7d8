import math

import numpy as np
import pytest

from flowrec import _kernels
from flowrec.bessel import bessel_zero
from flowrec.errors import EmptyDomainError
from flowrec.geometry import DiskTransform, GeometryBounds, RadiusFunction
from flowrec.grids import GridSpec, VoxelGrid
from flowrec.phantom import NoiseSpec, retrieve_velocity, synth_phase_contrast
from flowrec.velocity import (
    DiskEigenBasis,
    VelocityCoefficients,
    VelocityReconConfig,
    assemble_design_matrix,
    choose_beta_discrepancy,
    compute_delta_u,
    cutoff_for_mode_count,
    gram_matrix,
    project_radial_field,
    reconstruct_velocity,
)


class TestBasisConstruction:
    def test_smallest_basis(self):
        basis = DiskEigenBasis(6.0)
        assert len(basis) == 1
        assert basis.mode_tuples() == [(0, 1, "cos")]
        assert bessel_zero(0, 1) ** 2 == pytest.approx(5.7832, abs=1e-3)
        assert bessel_zero(1, 1) ** 2 == pytest.approx(14.682, abs=1e-2)

    def test_count_nondecreasing_in_cutoff(self):
        sizes = [len(DiskEigenBasis(m)) for m in (6.0, 20.0, 50.0, 120.0, 300.0)]
        assert sizes == sorted(sizes)

    def test_sorted_by_eigenvalue_cos_first(self):
        basis = DiskEigenBasis(150.0)
        assert np.all(np.diff(basis.lam) >= -1e-12)
        for j in range(len(basis) - 1):
            if basis.lam[j] == basis.lam[j + 1] and basis.m[j] == basis.m[j + 1]:
                assert (basis.parity[j], basis.parity[j + 1]) == (0, 1)

    def test_no_sine_for_m_zero(self):
        basis = DiskEigenBasis(300.0)
        assert not np.any((basis.m == 0) & (basis.parity == 1))

    def test_cutoff_below_first_eigenvalue_rejected(self):
        with pytest.raises(ValueError):
            DiskEigenBasis(5.0)

    def test_cutoff_for_mode_count(self):
        for target in (1, 7, 30, 100):
            basis = DiskEigenBasis(cutoff_for_mode_count(target))
            assert len(basis) >= target
            assert len(basis) <= target + 2  # at most one symmetric pair over


class TestOrthonormality:
    def test_gram_is_identity(self):
        basis = DiskEigenBasis(600.0)
        g = gram_matrix(basis)
        off = g - np.eye(len(basis))
        assert np.max(np.abs(off)) <= 1e-6


class TestEvaluation:
    def test_dirichlet_boundary_values(self, rng):
        basis = DiskEigenBasis(150.0)
        phi = rng.uniform(0.0, 2.0 * math.pi, 50)
        vals = basis.evaluate(np.ones(50), phi)
        assert np.max(np.abs(vals)) < 1e-12

    def test_gradient_of_first_mode_at_origin(self):
        basis = DiskEigenBasis(6.0)
        coeffs = VelocityCoefficients(basis, [1.0])
        grad = coeffs.gradient(np.zeros((1, 2)))
        assert np.allclose(grad, 0.0, atol=1e-14)

    def test_boundary_gradient_purely_radial(self):
        # J_m(j_mn) = 0 kills the angular derivative on the boundary
        basis = DiskEigenBasis(200.0)
        phi = np.arange(360) * (2.0 * math.pi / 360.0)
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        tangents = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
        for j in range(len(basis)):
            c = np.zeros(len(basis))
            c[j] = 1.0
            grad = VelocityCoefficients(basis, c).gradient(pts)
            tangential = np.abs(np.sum(grad * tangents, axis=1))
            assert np.max(tangential) <= 1e-12

    def test_gradient_matches_finite_differences(self, rng):
        basis = DiskEigenBasis(90.0)
        c = rng.normal(0.0, 1.0, len(basis))
        coeffs = VelocityCoefficients(basis, c)
        pts = 0.7 * np.stack([rng.uniform(-1, 1, 20), rng.uniform(-1, 1, 20)], axis=-1)
        e = 1e-6
        for p in pts:
            g = coeffs.gradient(p[None, :])[0]
            fx = (coeffs.eval(p + [e, 0]) - coeffs.eval(p - [e, 0])) / (2 * e)
            fy = (coeffs.eval(p + [0, e]) - coeffs.eval(p - [0, e])) / (2 * e)
            assert np.allclose(g, [fx[0], fy[0]], atol=1e-7)

    def test_eigen_residual_finite_differences(self, rng):
        # -Lap psi = lambda psi checked with the 5-point stencil, step 1e-4
        basis = DiskEigenBasis(16.0)
        npts = 10_000
        r = np.sqrt(rng.uniform(0.0, 1.0, npts)) * 0.95
        phi = rng.uniform(0.0, 2.0 * math.pi, npts)
        pts = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
        e = 1e-4
        for j in range(len(basis)):
            c = np.zeros(len(basis))
            c[j] = 1.0
            vc = VelocityCoefficients(basis, c)
            lap = (
                vc.eval(pts + [e, 0])
                + vc.eval(pts - [e, 0])
                + vc.eval(pts + [0, e])
                + vc.eval(pts - [0, e])
                - 4.0 * vc.eval(pts)
            ) / e**2
            resid = lap + basis.lam[j] * vc.eval(pts)
            assert np.max(np.abs(resid)) <= 1e-6


class TestDesignMatrix:
    def setup_method(self):
        self.bounds = GeometryBounds(0.25, 0.85, 2)
        self.radius = RadiusFunction(0.5)
        self.transform = DiskTransform(self.radius, self.bounds)
        self.spec = GridSpec.fov(24)
        self.basis = DiskEigenBasis(100.0)

    def test_exterior_voxels_dropped(self):
        design = assemble_design_matrix(self.basis, self.transform, self.spec, 8)
        # corner voxel is far outside the radius-0.5 disk
        assert 0 not in design.vox_linear
        fractions_full = np.zeros(self.spec.nx * self.spec.ny)
        fractions_full[design.vox_linear] = design.fractions
        grid_frac = _kernels.rasterize_fractions(
            0.5, np.zeros(0), np.zeros(0), -1.0, -1.0, self.spec.h, 24, 24, 8
        )
        assert np.array_equal(fractions_full, grid_frac.reshape(-1))

    def test_constant_one_sampling_self_consistency(self):
        # replacing every basis function by the constant 1 must give rows of ones
        design = assemble_design_matrix(self.basis, self.transform, self.spec, 8)
        ones_tables = np.ones_like(self.basis.radial_tables(64))
        s = 8
        offs = (np.arange(s) + 0.5) * (self.spec.h / s)
        xs = (self.spec.origin[0] + np.arange(24) * self.spec.h)[:, None] + offs
        ys = (self.spec.origin[1] + np.arange(24) * self.spec.h)[:, None] + offs
        px = np.broadcast_to(xs.reshape(24, 1, s, 1), (24, 24, s, s))
        py = np.broadcast_to(ys.reshape(1, 24, 1, s), (24, 24, s, s))
        inside = px**2 + py**2 < self.radius(np.arctan2(py, px)) ** 2
        counts = inside.sum(axis=(2, 3)).reshape(-1)
        retained = np.flatnonzero(counts > 0)
        row_of = np.full(counts.size, -1, dtype=np.int64)
        row_of[retained] = np.arange(retained.size)
        vox = np.broadcast_to(np.arange(counts.size).reshape(24, 24, 1, 1), inside.shape)
        sums = _kernels.design_sums(
            np.sqrt(px**2 + py**2)[inside],
            np.arctan2(py, px)[inside],
            row_of[vox[inside]],
            retained.size,
            np.zeros(len(self.basis), dtype=np.int64),
            np.ones(len(self.basis)),
            np.zeros(len(self.basis), dtype=np.int64),
            ones_tables,
            ones_tables.shape[1] - 3,
        )
        entries = sums / counts[retained][:, None]
        assert np.allclose(entries, 1.0, atol=1e-12)

    def test_identity_scaling_entry_against_fine_oracle(self):
        # R == r0 makes the transform a pure scaling: design entries equal
        # plain voxel means of psi(y / r0)
        bounds = GeometryBounds(0.5, 0.85, 3)
        transform = DiskTransform(RadiusFunction(0.5), bounds)
        spec = GridSpec.fov(16)
        basis = DiskEigenBasis(60.0)
        design = assemble_design_matrix(basis, transform, spec, 16)
        # fully interior voxel near the origin
        target_vox = (8 * spec.ny + 8)
        row = np.flatnonzero(design.vox_linear == target_vox)[0]
        s = 160
        offs = (np.arange(s) + 0.5) * (spec.h / s)
        px = spec.origin[0] + 8 * spec.h + offs[:, None]
        py = spec.origin[1] + 8 * spec.h + offs[None, :]
        pts = np.stack(np.broadcast_arrays(px, py), axis=-1).reshape(-1, 2) / 0.5
        for j in range(len(basis)):
            c = np.zeros(len(basis))
            c[j] = 1.0
            oracle = VelocityCoefficients(basis, c).eval(pts).mean()
            assert design.A[row, j] == pytest.approx(oracle, abs=1e-3)

    def test_empty_domain_rejected(self):
        tiny = GridSpec(2, 2, 0.05, (0.8, 0.8))
        with pytest.raises(EmptyDomainError):
            assemble_design_matrix(self.basis, self.transform, tiny, 4)


def _poiseuille_grid(spec, radius, bounds, u_max=1.0, sigma=0.0, seed=0, venc=2.5):
    r0 = radius.b0

    def u_field(pts):
        rho = np.hypot(pts[:, 0], pts[:, 1])
        return u_max * (1.0 - (rho / r0) ** 2)

    pc = synth_phase_contrast(
        u_field, radius, spec, venc, NoiseSpec(0.0, sigma, seed), subsamples=16
    )
    return retrieve_velocity(pc)


class TestReconstruction:
    def setup_method(self):
        self.bounds = GeometryBounds(0.3, 0.8, 2)
        self.radius = RadiusFunction(0.55)
        self.transform = DiskTransform(self.radius, self.bounds)
        self.spec = GridSpec.fov(48)

    def test_single_mode_recovery(self):
        basis = DiskEigenBasis(80.0)
        target = VelocityCoefficients(basis, np.eye(len(basis))[0])

        def u_field(pts):
            return target.eval(self.transform.inverse(pts))

        pc = synth_phase_contrast(u_field, self.radius, self.spec, 8.0, NoiseSpec())
        u_grid = retrieve_velocity(pc)
        cfg = VelocityReconConfig(cutoff=80.0)
        coeffs, info, _ = reconstruct_velocity(u_grid, self.transform, 1e-10, cfg)
        expected = np.zeros(len(basis))
        expected[0] = 1.0
        assert np.max(np.abs(coeffs.c - expected)) < 1e-3

    def test_huge_beta_kills_coefficients(self):
        u_grid = _poiseuille_grid(self.spec, self.radius, self.bounds)
        cfg = VelocityReconConfig(cutoff=100.0)
        coeffs, _, _ = reconstruct_velocity(u_grid, self.transform, 1e12, cfg)
        assert float(np.linalg.norm(coeffs.c)) <= 1e-6

    def test_zero_data_gives_zero_coefficients(self):
        u_grid = VoxelGrid(self.spec, np.zeros((48, 48)), "velocity")
        cfg = VelocityReconConfig(cutoff=100.0)
        coeffs, info, _ = reconstruct_velocity(u_grid, self.transform, 1e-4, cfg)
        assert np.all(coeffs.c == 0.0)
        assert info.residual == 0.0

    def test_cholesky_and_cg_agree(self):
        u_grid = _poiseuille_grid(self.spec, self.radius, self.bounds)
        c1, _, design = reconstruct_velocity(
            u_grid, self.transform, 1e-6, VelocityReconConfig(cutoff=100.0)
        )
        c2, _, _ = reconstruct_velocity(
            u_grid,
            self.transform,
            1e-6,
            VelocityReconConfig(cutoff=100.0, solver="cg"),
            design=design,
        )
        assert np.allclose(c1.c, c2.c, atol=1e-9)

    def test_normal_equation_residual_tiny(self):
        u_grid = _poiseuille_grid(self.spec, self.radius, self.bounds)
        _, info, _ = reconstruct_velocity(
            u_grid, self.transform, 1e-8, VelocityReconConfig(cutoff=150.0)
        )
        assert info.normal_eq_rel_residual <= 1e-10


class TestBetaDiscrepancy:
    def setup_method(self):
        self.bounds = GeometryBounds(0.3, 0.8, 2)
        self.radius = RadiusFunction(0.55)
        self.transform = DiskTransform(self.radius, self.bounds)
        self.spec = GridSpec.fov(48)
        self.cfg = VelocityReconConfig(cutoff=120.0, beta0=1e-2)

    def test_large_delta_returns_beta0(self):
        u_grid = _poiseuille_grid(self.spec, self.radius, self.bounds, sigma=0.01, seed=1)
        coeffs, info, _ = choose_beta_discrepancy(u_grid, self.transform, 10.0, self.cfg)
        assert info.beta == self.cfg.beta0
        assert not info.discrepancy_unreachable

    def test_postcondition_residual_bound(self):
        u_grid = _poiseuille_grid(self.spec, self.radius, self.bounds, sigma=0.02, seed=2)
        delta_u = 0.02
        coeffs, info, _ = choose_beta_discrepancy(u_grid, self.transform, delta_u, self.cfg)
        assert info.discrepancy_unreachable or info.residual <= 2.0 * delta_u

    def test_sweep_monotonicity(self):
        u_grid = _poiseuille_grid(self.spec, self.radius, self.bounds, sigma=0.05, seed=3)
        coeffs, info, design = choose_beta_discrepancy(
            u_grid, self.transform, 1e-4, self.cfg
        )
        # residual non-decreasing in beta along the recorded sweep
        res = np.array(info.sweep_residuals)
        assert np.all(np.diff(res) <= 1e-10)
        # penalty norm non-increasing in beta
        rhs = design.rhs(u_grid)
        lam2 = design.basis.lam**2
        norms = []
        for beta in info.sweep_betas:
            g = design.gram() + beta * np.diag(lam2)
            c = np.linalg.solve(g, rhs)
            norms.append(math.sqrt(float(np.sum(lam2 * c * c))))
        assert np.all(np.diff(np.array(norms)) >= -1e-10)

    def test_selected_beta_decreases_with_noise(self):
        betas = []
        for sigma, seed in ((0.2, 11), (0.02, 12), (0.002, 13)):
            u_grid = _poiseuille_grid(self.spec, self.radius, self.bounds, sigma=sigma, seed=seed)
            clean = _poiseuille_grid(self.spec, self.radius, self.bounds)
            design = None
            # realized reference-domain data error over retained voxels
            coeffs, info, design = choose_beta_discrepancy(
                u_grid,
                self.transform,
                _weighted_gap(u_grid, clean, self.transform, self.cfg),
                self.cfg,
            )
            betas.append(info.beta)
        assert betas[0] > betas[1] > betas[2]


def _weighted_gap(noisy, clean, transform, cfg):
    design = assemble_design_matrix(
        DiskEigenBasis(cfg.cutoff), transform, noisy.spec, cfg.subsamples
    )
    d = design.data_vector(noisy) - design.data_vector(clean)
    return math.sqrt(float(np.sum(design.weights * d * d)))


class TestDeltaU:
    def test_zero_inputs(self):
        assert compute_delta_u(0.0, 0.0) == 0.0

    def test_linear_in_eps(self):
        assert compute_delta_u(0.0, 0.3) == pytest.approx(3.0 * compute_delta_u(0.0, 0.1))

    def test_square_root_law_in_delta_r(self):
        a = compute_delta_u(0.04, 0.0)
        b = compute_delta_u(0.02, 0.0)
        assert a / b == pytest.approx(math.sqrt(2.0), rel=1e-12)


class TestRadialProjection:
    def test_projects_parabola(self):
        basis = DiskEigenBasis(400.0)
        c = project_radial_field(basis, lambda r: 1.0 - r**2)
        vc = VelocityCoefficients(basis, c)
        pts = np.stack([np.linspace(0, 0.9, 30), np.zeros(30)], axis=-1)
        vals = vc.eval(pts)
        truth = 1.0 - np.linspace(0, 0.9, 30) ** 2
        assert np.max(np.abs(vals - truth)) < 5e-3
        assert np.all(c[basis.m != 0] == 0.0)
