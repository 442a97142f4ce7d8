import numpy as np
import pytest

from flowrec.bessel import bessel_j, bessel_j_prime, bessel_zero
from flowrec.errors import GeometryError


def bisect_zero(m, lo, hi, tol=1e-13):
    """Independent zero locator: plain bisection on bessel_j."""
    flo = bessel_j(m, lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = bessel_j(m, mid)
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def test_values_at_zero():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0


def test_first_zero_of_j0():
    assert abs(bessel_j(0, 2.404825557695773)) < 1e-10
    assert bessel_zero(0, 1) == pytest.approx(2.404825557695773, abs=1e-12)


def test_zero_against_bisection_oracle():
    assert bessel_zero(0, 1) == pytest.approx(bisect_zero(0, 2.0, 3.0), abs=1e-11)
    assert bessel_zero(1, 1) == pytest.approx(bisect_zero(1, 3.0, 4.5), abs=1e-11)
    assert bessel_zero(2, 3) == pytest.approx(bisect_zero(2, 11.0, 12.5), abs=1e-11)


def test_zero_ordering_and_interlacing():
    assert bessel_zero(0, 1) < bessel_zero(1, 1) < bessel_zero(0, 2)
    for m in range(6):
        for n in range(1, 6):
            assert bessel_zero(m, n) < bessel_zero(m, n + 1)
            assert bessel_zero(m, n) < bessel_zero(m + 1, n) < bessel_zero(m, n + 1)


def test_zeros_are_roots():
    for m in range(11):
        for n in range(1, 11):
            assert abs(bessel_j(m, bessel_zero(m, n))) < 1e-12


def test_bessel_equation_residual():
    # x^2 J'' + x J' + (x^2 - m^2) J = 0, with J'' from the two-step recurrence
    x = np.linspace(0.01, 60.0, 400)
    for m in range(13):
        j = bessel_j(m, x)
        jp = bessel_j_prime(m, x)
        jpp = 0.25 * (
            bessel_j(abs(m - 2), x) * (1.0 if m >= 2 else 1.0)
            - 2.0 * bessel_j(m, x)
            + bessel_j(m + 2, x)
        )
        if m == 1:
            # J_{-1} = -J_1
            jpp = 0.25 * (-bessel_j(1, x) - 2.0 * bessel_j(1, x) + bessel_j(3, x))
        resid = x * x * jpp + x * jp + (x * x - m * m) * j
        assert np.max(np.abs(resid)) < 1e-8


def test_derivative_identities():
    x = np.linspace(0.1, 40.0, 200)
    e = 1e-6
    for m in (0, 1, 4):
        fd = (bessel_j(m, x + e) - bessel_j(m, x - e)) / (2.0 * e)
        assert np.allclose(bessel_j_prime(m, x), fd, atol=1e-9)


def test_negative_argument_rejected():
    with pytest.raises(GeometryError):
        bessel_j(0, -1.0)
