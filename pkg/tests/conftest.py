import numpy as np
import pytest

from flowrec.geometry import GeometryBounds, RadiusFunction

DEFAULT_BOUNDS = GeometryBounds(0.15, 0.85, 4)


def random_radius(rng, bounds=DEFAULT_BOUNDS, n_modes=4, amp=0.06, margin=0.05):
    """Random admissible radius function with decaying Fourier amplitudes."""
    while True:
        b0 = rng.uniform(0.4, 0.62)
        k = np.arange(1, n_modes + 1)
        a = rng.normal(0.0, amp, n_modes) / k
        b = rng.normal(0.0, amp, n_modes) / k
        r = RadiusFunction(b0, a, b)
        phi = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
        vals = r(phi)
        if vals.min() > bounds.r0 + margin and vals.max() < bounds.r1 - margin:
            return r


def random_disk_points(rng, n):
    """Uniform points in the closed unit disk."""
    r = np.sqrt(rng.uniform(0.0, 1.0, n))
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
