"""Wall shear stress from a radius function and a reference-domain velocity.

With viscosity normalized to one, the stress at boundary angle phi is

    tau(phi) = -n(phi) . J(cos phi, sin phi)^-1 . grad v(cos phi, sin phi),

combining the outward boundary normal, the inverse transformation Jacobian
at the reference boundary point and the reference-domain velocity gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DiskTransform, GeometryBounds, RadiusFunction, boundary_normal
from .velocity import VelocityCoefficients


@dataclass(frozen=True)
class WssProfile:
    """Stress samples on P equispaced boundary angles, P a power of two >= 8."""

    angles: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        values = np.asarray(self.values, dtype=float)
        p = angles.size
        if p < 8 or p & (p - 1) != 0:
            raise ValueError("sample count must be a power of two >= 8")
        expected = np.arange(p) * (2.0 * math.pi / p)
        if values.shape != angles.shape or not np.allclose(angles, expected, atol=1e-12):
            raise ValueError("angles must be 2*pi*i/P, i = 0..P-1")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values) -> "WssProfile":
        values = np.asarray(values, dtype=float)
        return cls(np.arange(values.size) * (2.0 * math.pi / values.size), values)

    @property
    def sample_count(self) -> int:
        return self.angles.size


def wall_shear_stress(
    radius: RadiusFunction,
    coeffs: VelocityCoefficients,
    bounds: GeometryBounds,
    n_samples: int = 256,
    viscosity: float = 1.0,
) -> WssProfile:
    """Evaluate the stress profile at n_samples equispaced angles.

    ``viscosity`` rescales the normalized result for reporting in physical
    units.
    """
    transform = DiskTransform(radius, bounds)
    phi = np.arange(n_samples) * (2.0 * math.pi / n_samples)
    normals = boundary_normal(radius, phi)
    pts = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    grads = coeffs.gradient(pts)
    values = np.empty(n_samples)
    for i in range(n_samples):
        jinv = transform.inverse_jacobian(pts[i])
        values[i] = -viscosity * float(normals[i] @ (jinv @ grads[i]))
    return WssProfile.from_values(values)


def lowpass_filter(tau: WssProfile, cutoff: int) -> WssProfile:
    """Projection onto trigonometric modes |k| <= cutoff by direct DFT.

    cutoff = P/2 reproduces the input (exact trigonometric interpolation),
    cutoff = 0 gives the constant mean profile.
    """
    p = tau.sample_count
    if not 0 <= cutoff <= p // 2:
        raise ValueError("cutoff must lie in [0, P/2]")
    vals = tau.values
    out = np.full(p, vals.mean())
    for k in range(1, cutoff + 1):
        ck = np.cos(k * tau.angles)
        sk = np.sin(k * tau.angles)
        ak = 2.0 / p * float(vals @ ck)
        bk = 2.0 / p * float(vals @ sk)
        if k == p // 2:
            ak *= 0.5
            bk *= 0.5
        out += ak * ck + bk * sk
    return WssProfile(tau.angles, out)


def mean_wss(tau: WssProfile) -> float:
    """Constant approximation: the arithmetic mean of the samples."""
    return float(tau.values.mean())


def wss_error(tau: WssProfile, tau_ref: WssProfile) -> float:
    """Relative discrete L2(0, 2*pi) distance to a reference profile."""
    if tau.sample_count != tau_ref.sample_count:
        raise ValueError("profiles have different sample counts")
    w = 2.0 * math.pi / tau.sample_count
    num = math.sqrt(w * float(np.sum((tau.values - tau_ref.values) ** 2)))
    den = math.sqrt(w * float(np.sum(tau_ref.values**2)))
    return num / den
