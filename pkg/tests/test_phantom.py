import math

import numpy as np
import pytest

from flowrec.errors import DegenerateHistogramError, EmptyMaskError, WrapRiskError
from flowrec.geometry import RadiusFunction
from flowrec.grids import GridSpec
from flowrec.phantom import (
    NoiseSpec,
    add_magnitude_noise,
    estimate_noise_level,
    normalize_magnitude,
    rasterize_characteristic,
    retrieve_velocity,
    synth_phase_contrast,
)

from conftest import random_radius


class TestRasterize:
    def test_interior_and_exterior_voxels(self):
        spec = GridSpec.fov(16)
        grid = rasterize_characteristic(RadiusFunction(0.5), spec, subsamples=8)
        # voxel containing the origin-adjacent region is fully inside
        assert grid.values[8, 8] == 1.0
        assert grid.values[0, 0] == 0.0

    def test_disk_area(self):
        spec = GridSpec.fov(128)
        grid = rasterize_characteristic(RadiusFunction(0.5), spec, subsamples=32)
        area = spec.voxel_area * float(grid.values.sum())
        assert area == pytest.approx(math.pi * 0.25, abs=1e-3)

    def test_values_in_unit_interval(self, rng):
        grid = rasterize_characteristic(random_radius(rng), GridSpec.fov(32))
        assert grid.values.min() >= 0.0 and grid.values.max() <= 1.0

    def test_monotone_in_radius(self, rng):
        spec = GridSpec.fov(24)
        r1 = random_radius(rng)
        r2 = RadiusFunction(r1.b0 + 0.05, r1.a, r1.b)
        g1 = rasterize_characteristic(r1, spec, subsamples=8)
        g2 = rasterize_characteristic(r2, spec, subsamples=8)
        assert np.all(g1.values <= g2.values)

    def test_matches_brute_force_subsampling(self, rng):
        r = random_radius(rng)
        spec = GridSpec(13, 11, 0.11, (-0.8, -0.7))
        s = 6
        grid = rasterize_characteristic(r, spec, subsamples=s)
        offs = (np.arange(s) + 0.5) * (spec.h / s)
        for ix in range(spec.nx):
            for iy in range(spec.ny):
                px = spec.origin[0] + ix * spec.h + offs[:, None]
                py = spec.origin[1] + iy * spec.h + offs[None, :]
                phi = np.arctan2(py, px)
                inside = px * px + py * py < r(phi) ** 2
                assert grid.values[ix, iy] == inside.mean()


class TestMagnitudeNoise:
    def test_zero_sigma_identity(self, rng):
        grid = rasterize_characteristic(random_radius(rng), GridSpec.fov(16))
        noisy, delta = add_magnitude_noise(grid, NoiseSpec(0.0, 0.0, 7))
        assert delta == 0.0
        assert noisy.values is grid.values or np.array_equal(noisy.values, grid.values)

    def test_realized_delta_matches_expectation(self):
        spec = GridSpec.fov(32)
        grid = rasterize_characteristic(RadiusFunction(0.5), spec, subsamples=4)
        sigma = 0.05
        expected = sigma * math.sqrt(spec.nx * spec.ny * spec.voxel_area)
        deltas = [
            add_magnitude_noise(grid, NoiseSpec(sigma, 0.0, seed))[1] for seed in range(20)
        ]
        assert np.mean(deltas) == pytest.approx(expected, rel=0.10)

    def test_fixed_seed_is_reproducible(self, rng):
        grid = rasterize_characteristic(random_radius(rng), GridSpec.fov(16))
        a, da = add_magnitude_noise(grid, NoiseSpec(0.03, 0.0, 42))
        b, db = add_magnitude_noise(grid, NoiseSpec(0.03, 0.0, 42))
        assert da == db
        assert np.array_equal(a.values, b.values)


class TestPhaseContrast:
    def test_constant_velocity_interior_voxel(self):
        spec = GridSpec.fov(16)
        r = RadiusFunction(0.5)
        c, venc = 0.3, 1.0
        data = synth_phase_contrast(lambda p: np.full(len(p), c), r, spec, venc, NoiseSpec())
        expected = np.exp(1j * 2.0 * math.pi * c / venc)
        assert data.values[8, 8] == pytest.approx(expected, abs=1e-12)
        retrieved = retrieve_velocity(data)
        assert retrieved.values[8, 8] == pytest.approx(c, abs=1e-12)

    def test_zero_velocity_interior_voxel(self):
        spec = GridSpec.fov(16)
        data = synth_phase_contrast(
            lambda p: np.zeros(len(p)), RadiusFunction(0.5), spec, 1.0, NoiseSpec()
        )
        assert data.values[8, 8] == pytest.approx(1.0 + 0.0j, abs=1e-14)

    def test_exterior_voxel_zero_signal(self):
        spec = GridSpec.fov(16)
        data = synth_phase_contrast(
            lambda p: np.zeros(len(p)), RadiusFunction(0.4), spec, 1.0, NoiseSpec()
        )
        assert data.values[0, 0] == 0.0

    def test_wrap_risk_rejected(self):
        spec = GridSpec.fov(8)
        with pytest.raises(WrapRiskError):
            synth_phase_contrast(
                lambda p: np.full(len(p), 0.96), RadiusFunction(0.5), spec, 1.0, NoiseSpec()
            )

    def test_exterior_phase_noise_dominates(self):
        # phase retrieval is high-variance where |d| is small: compare the
        # sample variance of retrieved values over noise draws
        spec = GridSpec.fov(8)
        r = RadiusFunction(0.35)
        interior, exterior = [], []
        for seed in range(1000):
            data = synth_phase_contrast(
                lambda p: np.full(len(p), 0.2),
                r,
                spec,
                1.0,
                NoiseSpec(0.0, 0.05, seed),
                subsamples=4,
            )
            u = retrieve_velocity(data).values
            interior.append(u[4, 4])
            exterior.append(u[0, 0])
        assert np.var(exterior) > 10.0 * np.var(interior)

    def test_round_trip_on_voxel_means(self):
        # linear velocity field, fully interior voxels: retrieval reproduces
        # the voxel means of u
        spec = GridSpec.fov(16)
        r = RadiusFunction(0.5)
        venc = 4.0

        def u_field(p):
            return 0.3 + 0.2 * p[:, 0] + 0.15 * p[:, 1]

        s = 8
        data = synth_phase_contrast(u_field, r, spec, venc, NoiseSpec(), subsamples=s)
        retrieved = retrieve_velocity(data)
        offs = (np.arange(s) + 0.5) * (spec.h / s)
        for ix, iy in [(8, 8), (7, 8), (8, 7), (7, 7)]:
            px = spec.origin[0] + ix * spec.h + offs[:, None]
            py = spec.origin[1] + iy * spec.h + offs[None, :]
            pts = np.stack(np.broadcast_arrays(px, py), axis=-1).reshape(-1, 2)
            mean_u = u_field(pts).mean()
            assert retrieved.values[ix, iy] == pytest.approx(mean_u, abs=1e-6)

    def test_determinism(self):
        spec = GridSpec.fov(8)
        args = (lambda p: np.full(len(p), 0.1), RadiusFunction(0.4), spec, 1.0)
        a = synth_phase_contrast(*args, NoiseSpec(0.0, 0.02, 5))
        b = synth_phase_contrast(*args, NoiseSpec(0.0, 0.02, 5))
        assert np.array_equal(a.values, b.values)


class TestNormalizeMagnitude:
    def test_bimodal_identity(self):
        spec = GridSpec.fov(16)
        grid = rasterize_characteristic(RadiusFunction(0.5), spec, subsamples=1)
        # subsamples=1 gives exactly {0, 1} values
        out = normalize_magnitude(grid)
        assert np.array_equal(out.values, grid.values)

    def test_affine_invariance(self, rng):
        spec = GridSpec.fov(32)
        ideal = rasterize_characteristic(random_radius(rng), spec)
        raw = ideal.with_values(5.0 + 3.0 * ideal.values)
        bins = 64
        out = normalize_magnitude(raw, bins=bins)
        assert np.max(np.abs(out.values - ideal.values)) <= 1.0 / bins + 1e-12

    def test_truncation_below_lower_peak(self):
        grid = rasterize_characteristic(RadiusFunction(0.5), GridSpec.fov(16))
        arr = np.where(grid.values > 0.5, 1.0, 0.0)
        arr[0, 0] = -0.4  # below the lower peak
        out = normalize_magnitude(grid.with_values(arr))
        assert out.values[0, 0] == 0.0

    def test_degenerate_histogram(self):
        spec = GridSpec.fov(8)
        grid = rasterize_characteristic(RadiusFunction(0.5), spec).with_values(
            np.full((8, 8), 3.7)
        )
        with pytest.raises(DegenerateHistogramError):
            normalize_magnitude(grid)


class TestNoiseEstimate:
    def test_noiseless_grid(self):
        spec = GridSpec.fov(16)
        grid = rasterize_characteristic(RadiusFunction(0.4), spec)
        mask = grid.values == 0.0
        assert estimate_noise_level(grid, mask) == 0.0

    def test_recovers_known_sigma(self):
        spec = GridSpec.fov(32)
        clean = rasterize_characteristic(RadiusFunction(0.45), spec, subsamples=8)
        mask = clean.values == 0.0
        ratios = []
        for seed in range(20):
            noisy, delta = add_magnitude_noise(clean, NoiseSpec(0.02, 0.0, seed))
            ratios.append(estimate_noise_level(noisy, mask) / delta)
        assert abs(np.mean(ratios) - 1.0) < 0.15

    def test_single_voxel_mask_rejected(self):
        spec = GridSpec.fov(8)
        grid = rasterize_characteristic(RadiusFunction(0.4), spec)
        mask = np.zeros_like(grid.values, dtype=bool)
        mask[0, 0] = True
        with pytest.raises(EmptyMaskError):
            estimate_noise_level(grid, mask)
