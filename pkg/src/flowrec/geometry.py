"""Star-shaped domain geometry.

A flow domain is parametrized by a truncated Fourier radius function
R(phi) and mapped onto from the unit disk B by the radial scaling
transformation

    (r cos phi, r sin phi)  ->  (r0*r + (R(phi) - r0)*r**eta) * (cos phi, sin phi).

This module holds the radius representation with its Sobolev norm
machinery, the transformation with Jacobian, inverse and boundary
normal, and the area difference of two such domains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InadmissibleRadius, PointOutsideDomain

TWO_PI = 2.0 * math.pi


def wrap_angle(phi):
    """Shift angles into the convention interval [0, 2*pi)."""
    return np.mod(phi, TWO_PI)


def angle_of(x, y):
    """atan2 in [0, 2*pi)."""
    return wrap_angle(np.arctan2(y, x))


@dataclass(frozen=True)
class RadiusFunction:
    """Truncated Fourier series R(phi) = b0 + sum_k a_k sin(k phi) + b_k cos(k phi).

    Coefficient arrays are 1-indexed conceptually: ``a[k-1]`` holds a_k.
    Instances are immutable; all evaluations are pure functions.
    """

    b0: float
    a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).copy()
        n = max(a.size, b.size)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "b0", float(self.b0))

    @property
    def order(self) -> int:
        return self.a.size

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.full(phi.shape, self.b0)
        for k in range(1, self.order + 1):
            out += self.a[k - 1] * np.sin(k * phi) + self.b[k - 1] * np.cos(k * phi)
        return out if out.ndim else float(out)

    def deriv(self, phi, order=1):
        """Termwise derivative of the Fourier series."""
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(phi.shape)
        for k in range(1, self.order + 1):
            kk = float(k) ** order
            if order % 4 == 0:
                s, c = self.a[k - 1], self.b[k - 1]
            elif order % 4 == 1:
                s, c = -self.b[k - 1], self.a[k - 1]
            elif order % 4 == 2:
                s, c = -self.a[k - 1], -self.b[k - 1]
            else:
                s, c = self.b[k - 1], -self.a[k - 1]
            out += kk * (s * np.sin(k * phi) + c * np.cos(k * phi))
        return out if out.ndim else float(out)

    def sobolev_norm_sq(self, s: int) -> float:
        """Squared H^s norm, 2*pi*b0^2 + pi * sum_k (1+k^2)^s (a_k^2 + b_k^2)."""
        k = np.arange(1, self.order + 1, dtype=float)
        w = (1.0 + k * k) ** s
        return TWO_PI * self.b0**2 + math.pi * float(np.sum(w * (self.a**2 + self.b**2)))

    def lipschitz_bound(self) -> float:
        """Upper bound for |R'(phi)|: sum_k k (|a_k| + |b_k|)."""
        k = np.arange(1, self.order + 1, dtype=float)
        return float(np.sum(k * (np.abs(self.a) + np.abs(self.b))))

    def is_admissible(self, bounds: "GeometryBounds", n_check: int = 720) -> bool:
        """r0 <= R <= r1 on a grid of ``n_check`` equispaced angles."""
        phi = np.arange(n_check) * (TWO_PI / n_check)
        vals = self(phi)
        return bool(np.all(vals >= bounds.r0) and np.all(vals <= bounds.r1))

    def coeff_vector(self) -> np.ndarray:
        """Flat coefficient layout [b0, a_1..a_N, b_1..b_N]."""
        return np.concatenate(([self.b0], self.a, self.b))

    @classmethod
    def from_coeff_vector(cls, vec, order: int) -> "RadiusFunction":
        vec = np.asarray(vec, dtype=float)
        if vec.size != 2 * order + 1:
            raise ValueError(f"expected {2 * order + 1} coefficients, got {vec.size}")
        return cls(vec[0], vec[1 : order + 1], vec[order + 1 :])

    def padded(self, order: int) -> "RadiusFunction":
        if order < self.order:
            raise ValueError("cannot truncate via padded()")
        return RadiusFunction(
            self.b0,
            np.pad(self.a, (0, order - self.order)),
            np.pad(self.b, (0, order - self.order)),
        )

    def to_dict(self) -> dict:
        return {"b0": self.b0, "a": list(self.a), "b": list(self.b)}

    @classmethod
    def from_dict(cls, d: dict) -> "RadiusFunction":
        return cls(d["b0"], np.asarray(d.get("a", [])), np.asarray(d.get("b", [])))


def sobolev_weights(order: int, s: int) -> np.ndarray:
    """Diagonal of the H^s Gram matrix in the [b0, a_1..a_N, b_1..b_N] layout."""
    k = np.arange(1, order + 1, dtype=float)
    w = math.pi * (1.0 + k * k) ** s
    return np.concatenate(([TWO_PI], w, w))


def radius_distance(r1: RadiusFunction, r2: RadiusFunction, s: int) -> float:
    """H^s norm of the difference of two radius functions."""
    n = max(r1.order, r2.order)
    diff = r1.padded(n).coeff_vector() - r2.padded(n).coeff_vector()
    return math.sqrt(float(np.sum(sobolev_weights(n, s) * diff**2)))


@dataclass(frozen=True)
class GeometryBounds:
    """Admissibility bounds 0 < r0 < r1 < 1 and transformation exponent eta >= 2."""

    r0: float
    r1: float
    eta: int = 4

    def __post_init__(self):
        if not (0.0 < self.r0 < self.r1 < 1.0):
            raise ValueError(f"need 0 < r0 < r1 < 1, got r0={self.r0}, r1={self.r1}")
        if int(self.eta) != self.eta or self.eta < 2:
            raise ValueError(f"eta must be an integer >= 2, got {self.eta}")
        object.__setattr__(self, "eta", int(self.eta))

    def to_dict(self) -> dict:
        return {"r0": self.r0, "r1": self.r1, "eta": self.eta}

    @classmethod
    def from_dict(cls, d: dict) -> "GeometryBounds":
        return cls(d["r0"], d["r1"], d.get("eta", 4))


DISK_TOL = 1e-12


@dataclass(frozen=True)
class DiskTransform:
    """The bijection from the closed unit disk onto the closure of the flow domain.

    Radial profile g(r, phi) = r0*r + (R(phi) - r0)*r**eta is strictly
    increasing in r (dg/dr >= r0 > 0 for admissible R), which makes the
    map invertible with det(Jacobian) >= r0^2 everywhere.
    """

    radius: RadiusFunction
    bounds: GeometryBounds

    def __post_init__(self):
        if not self.radius.is_admissible(self.bounds):
            raise InadmissibleRadius(
                "radius function leaves the admissible band "
                f"[{self.bounds.r0}, {self.bounds.r1}]"
            )

    # -- radial profile -------------------------------------------------

    def profile(self, r, phi):
        r0 = self.bounds.r0
        return r0 * np.asarray(r) + (self.radius(phi) - r0) * np.asarray(r) ** self.bounds.eta

    def profile_deriv(self, r, phi):
        r0, eta = self.bounds.r0, self.bounds.eta
        return r0 + eta * (self.radius(phi) - r0) * np.asarray(r) ** (eta - 1)

    # -- forward / inverse ----------------------------------------------

    def forward(self, x):
        """Map points of the closed unit disk into the physical domain."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        r = np.hypot(pts[:, 0], pts[:, 1])
        if np.any(r > 1.0 + DISK_TOL):
            raise PointOutsideDomain("point outside the closed unit disk")
        phi = angle_of(pts[:, 0], pts[:, 1])
        g = self.profile(r, phi)
        scale = np.where(r > 0.0, g / np.where(r > 0.0, r, 1.0), 0.0)
        out = pts * scale[:, None]
        return out[0] if single else out

    def inverse_radius(self, rho, phi):
        """Solve g(r, phi) = rho for r in [0, 1] (vectorized safeguarded Newton).

        Initial guess rho / R(phi); the residual is monotone with slope
        >= r0, so Newton with a clamp to the current bracket converges for
        every admissible radius function.
        """
        rho = np.asarray(rho, dtype=float)
        phi = np.asarray(phi, dtype=float)
        r0, eta = self.bounds.r0, self.bounds.eta
        c = self.radius(phi) - r0
        r = np.clip(rho / (c + r0), 0.0, 1.0)
        lo = np.zeros_like(r)
        hi = np.ones_like(r)
        for _ in range(60):
            g = r0 * r + c * r**eta - rho
            if np.all(np.abs(g) < 1e-14):
                break
            hi = np.where(g > 0.0, r, hi)
            lo = np.where(g < 0.0, r, lo)
            dg = r0 + eta * c * r ** (eta - 1)
            rn = r - g / dg
            bad = (rn <= lo) | (rn >= hi) | ~np.isfinite(rn)
            r = np.where(bad, 0.5 * (lo + hi), rn)
        return r

    def inverse(self, y):
        """Inverse map; raises PointOutsideDomain when |y| > R(phi(y)) + tol."""
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        pts = np.atleast_2d(y)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        phi = angle_of(pts[:, 0], pts[:, 1])
        rvals = self.radius(phi)
        if np.any(rho > rvals + DISK_TOL):
            raise PointOutsideDomain("point outside the closure of the flow domain")
        r = self.inverse_radius(np.minimum(rho, rvals), phi)
        scale = np.where(rho > 0.0, r / np.where(rho > 0.0, rho, 1.0), 0.0)
        out = pts * scale[:, None]
        return out[0] if single else out

    # -- Jacobians --------------------------------------------------------

    def jacobian_polar(self, r, phi) -> np.ndarray:
        """Differential in the rotating orthonormal frame (e_r, e_phi).

        [[dg/dr, R'(phi) r^(eta-1)], [0, g/r]] with the removable r->0
        limit g/r -> r0 filled in analytically.
        """
        r0, eta = self.bounds.r0, self.bounds.eta
        rr = self.radius(phi)
        dr = self.radius.deriv(phi)
        re = float(r) ** (eta - 1)
        return np.array(
            [
                [r0 + eta * (rr - r0) * re, dr * re],
                [0.0, r0 + (rr - r0) * re],
            ]
        )

    def jacobian(self, x) -> np.ndarray:
        """Cartesian Jacobian, the polar-frame matrix conjugated by the frame rotation."""
        x = np.asarray(x, dtype=float)
        r = math.hypot(x[0], x[1])
        if r > 1.0 + DISK_TOL:
            raise PointOutsideDomain("point outside the closed unit disk")
        phi = angle_of(x[0], x[1])
        mat = self.jacobian_polar(r, phi)
        c, s = math.cos(phi), math.sin(phi)
        q = np.array([[c, -s], [s, c]])
        return q @ mat @ q.T

    def inverse_jacobian(self, x) -> np.ndarray:
        """Exact 2x2 inverse of the Cartesian Jacobian (det >= r0^2 > 0)."""
        j = self.jacobian(x)
        det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
        return np.array([[j[1, 1], -j[0, 1]], [-j[1, 0], j[0, 0]]]) / det

    def jacobian_det(self, r, phi):
        """det J at polar coordinates, (dg/dr) * (g/r)."""
        r0, eta = self.bounds.r0, self.bounds.eta
        rr = np.asarray(self.radius(phi))
        re = np.asarray(r, dtype=float) ** (eta - 1)
        return (r0 + eta * (rr - r0) * re) * (r0 + (rr - r0) * re)


def boundary_normal(radius: RadiusFunction, phi):
    """Outward unit normal of the boundary curve R(phi)(cos phi, sin phi).

    (R cos + R' sin, R sin - R' cos) / sqrt(R^2 + R'^2); the formula is
    self-normalizing and its denominator stays >= r0 for admissible R.
    """
    phi = np.asarray(phi, dtype=float)
    r = radius(phi)
    dr = radius.deriv(phi)
    den = np.sqrt(r * r + dr * dr)
    n = np.stack(
        [
            (r * np.cos(phi) + dr * np.sin(phi)) / den,
            (r * np.sin(phi) - dr * np.cos(phi)) / den,
        ],
        axis=-1,
    )
    return n


def domain_area_difference(r1: RadiusFunction, r2: RadiusFunction, n_quad: int = 2048) -> float:
    """Area of Omega_{R1} \\ Omega_{R2} by trapezoid quadrature on the angle.

    The set difference in polar coordinates is the band R2 < r < R1 on the
    angles where R1 > R2, so the area is the integral of (R1^2 - R2^2)/2
    restricted there.
    """
    phi = np.arange(n_quad) * (TWO_PI / n_quad)
    v1 = r1(phi)
    v2 = r2(phi)
    integrand = 0.5 * np.where(v1 > v2, v1 * v1 - v2 * v2, 0.0)
    return float(np.sum(integrand) * (TWO_PI / n_quad))
