"""Synthetic magnitude and phase-contrast voxel data.

The magnitude model is the voxel mean of the domain's characteristic
function; phase-contrast voxels hold means of chi_Omega * exp(i 2 pi u / venc).
Noise enters the magnitude voxel means as additive Gaussians and the
complex signal as Gaussian perturbations per component, which reproduces
the strongly amplified velocity noise outside and near the flow boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateHistogramError, EmptyMaskError, WrapRiskError
from .geometry import RadiusFunction
from .grids import GridSpec, PhaseContrastData, VoxelGrid

DEFAULT_SUBSAMPLES = 16


@dataclass(frozen=True)
class NoiseSpec:
    """Noise amplitudes and the seed of the counter-based generator."""

    sigma_mag: float = 0.0
    sigma_complex: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_mag < 0.0 or self.sigma_complex < 0.0:
            raise ValueError("noise sigmas must be >= 0")


def _rng(seed: int, stream: int) -> np.random.Generator:
    # Philox is counter-based: every drawn value is a pure function of
    # (seed, stream, position), independent of evaluation order.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), stream))))


def rasterize_characteristic(
    radius: RadiusFunction, spec: GridSpec, subsamples: int = DEFAULT_SUBSAMPLES
) -> VoxelGrid:
    """Voxel means of the characteristic function of the star domain.

    Each voxel value is the fraction of an s x s midpoint subsample lying
    strictly inside |xi| < R(phi(xi)).
    """
    if subsamples < 1:
        raise ValueError("subsamples must be >= 1")
    vals = _kernels.rasterize_fractions(
        radius.b0,
        radius.a,
        radius.b,
        spec.origin[0],
        spec.origin[1],
        spec.h,
        spec.nx,
        spec.ny,
        subsamples,
    )
    return VoxelGrid(spec, vals, "magnitude")


def add_magnitude_noise(grid: VoxelGrid, noise: NoiseSpec):
    """Add i.i.d. Gaussian noise to the voxel means.

    Returns the perturbed grid together with the realized discrete L2(D)
    noise norm delta = (sum_i e_i^2 h^2)^(1/2) so parameter choice rules can
    work with the true noise level.
    """
    if noise.sigma_mag == 0.0:
        return grid, 0.0
    e = _rng(noise.seed, 0).normal(0.0, noise.sigma_mag, size=grid.values.shape)
    delta = math.sqrt(grid.spec.voxel_area * float(np.sum(e * e)))
    return grid.with_values(grid.values + e), delta


def _subsample_points(spec: GridSpec, s: int):
    offs = (np.arange(s) + 0.5) * (spec.h / s)
    xs = (spec.origin[0] + np.arange(spec.nx) * spec.h)[:, None] + offs[None, :]
    ys = (spec.origin[1] + np.arange(spec.ny) * spec.h)[:, None] + offs[None, :]
    px = xs.reshape(spec.nx, 1, s, 1)
    py = ys.reshape(1, spec.ny, 1, s)
    return np.broadcast_to(px, (spec.nx, spec.ny, s, s)), np.broadcast_to(
        py, (spec.nx, spec.ny, s, s)
    )


def synth_phase_contrast(
    u_field,
    radius: RadiusFunction,
    spec: GridSpec,
    venc: float,
    noise: NoiseSpec,
    subsamples: int = DEFAULT_SUBSAMPLES,
) -> PhaseContrastData:
    """Phase-contrast signal d|V = mean over V of chi_Omega exp(i 2 pi u / venc),
    plus complex Gaussian noise per component.

    ``u_field`` is a callable taking an (n, 2) array of physical points and
    returning velocities; it is only evaluated inside the domain (the model
    assumes zero velocity outside).
    """
    if venc <= 0.0:
        raise ValueError("venc must be positive")
    px, py = _subsample_points(spec, subsamples)
    rr2 = px * px + py * py
    phi = np.arctan2(py, px)
    rv = radius(phi)
    inside = rr2 < rv * rv

    signal = np.zeros(inside.shape, dtype=complex)
    pts_in = np.stack([px[inside], py[inside]], axis=-1)
    if pts_in.size:
        u_vals = np.asarray(u_field(pts_in), dtype=float)
        if float(np.max(np.abs(u_vals))) >= 0.95 * venc:
            raise WrapRiskError(
                "sampled velocity reaches 95% of venc; phase data would wrap"
            )
        signal[inside] = np.exp(1j * 2.0 * math.pi * u_vals / venc)
    means = signal.mean(axis=(2, 3))
    return apply_complex_noise(PhaseContrastData(spec, means, venc), noise)


def apply_complex_noise(data: PhaseContrastData, noise: NoiseSpec) -> PhaseContrastData:
    """Add Gaussian noise per complex component (stream 1 of the seed)."""
    if noise.sigma_complex == 0.0:
        return data
    spec = data.spec
    e = _rng(noise.seed, 1).normal(0.0, noise.sigma_complex, size=(spec.nx, spec.ny, 2))
    return PhaseContrastData(spec, data.values + e[:, :, 0] + 1j * e[:, :, 1], data.venc)


def retrieve_velocity(data: PhaseContrastData) -> VoxelGrid:
    """Velocity from the signal phase, u = venc * arg(d) / (2 pi).

    arg is taken in (-pi, pi], so a pure phase 2 pi u / venc returns u for
    |u| < venc / 2.
    """
    vals = data.venc * np.angle(data.values) / (2.0 * math.pi)
    return VoxelGrid(data.spec, vals, "velocity")


def normalize_magnitude(raw: VoxelGrid, bins: int = 64) -> VoxelGrid:
    """Rescale raw magnitude data to [0, 1] using its two histogram peaks.

    The peak locations m0 < m1 are the centers of the two highest-count
    local maxima of a ``bins``-bin histogram; the output is the truncated
    affine map max(0, min(1, (raw - m0)/(m1 - m0))).
    """
    vals = raw.values
    if np.unique(vals).size < 2:
        raise DegenerateHistogramError("magnitude data has fewer than two distinct values")
    counts, edges = np.histogram(vals, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    maxima = []
    for i in range(bins):
        left_ok = i == 0 or counts[i] > counts[i - 1]
        right_ok = i == bins - 1 or counts[i] > counts[i + 1]
        if left_ok and right_ok:
            maxima.append(i)
    if len(maxima) < 2:
        raise DegenerateHistogramError("magnitude histogram has fewer than two local maxima")
    # two highest-count maxima; ties resolved toward the lower bin index
    maxima.sort(key=lambda i: (-counts[i], i))
    lo, hi = sorted(centers[i] for i in maxima[:2])
    out = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
    return raw.with_values(out, "magnitude")


def estimate_noise_level(grid: VoxelGrid, exterior_mask) -> float:
    """Noise level from voxels assumed outside the flow domain:
    sample standard deviation times (nx * ny * h^2)^(1/2)."""
    mask = np.asarray(exterior_mask, dtype=bool)
    if mask.shape != grid.values.shape:
        raise ValueError("mask shape does not match grid")
    vals = grid.values[mask]
    if vals.size < 2:
        raise EmptyMaskError("noise estimation needs at least two exterior voxels")
    std = float(np.std(vals, ddof=1))
    return std * math.sqrt(grid.spec.nx * grid.spec.ny * grid.spec.voxel_area)
