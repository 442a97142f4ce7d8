"""Agreement between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from flowrec import _kernels
from flowrec._kernels import _ref
from flowrec.geo_ident import gauss_legendre_01
from flowrec.velocity import DiskEigenBasis

from conftest import random_radius

pytestmark = pytest.mark.skipif(
    not _kernels.HAVE_COMPILED, reason="compiled kernels unavailable"
)

from flowrec._kernels import _fast  # noqa: E402  (import guarded by skip)


@pytest.fixture
def radius(rng):
    return random_radius(rng)


def test_rasterize_agreement(rng, radius):
    args = (radius.b0, radius.a, radius.b, -1.0, -1.0, 2.0 / 48, 48, 48, 8)
    f_ref = _ref.rasterize_fractions(*args)
    f_fast = _fast.rasterize_fractions(*args)
    assert np.array_equal(f_ref, f_fast)


def test_rasterize_offset_grid_agreement(rng, radius):
    args = (radius.b0, radius.a, radius.b, -0.93, -0.71, 0.07, 21, 17, 5)
    assert np.array_equal(
        _ref.rasterize_fractions(*args), _fast.rasterize_fractions(*args)
    )


def test_heaviside_means_agreement(rng, radius):
    nodes, weights = gauss_legendre_01(4)
    args = (radius.b0, radius.a, radius.b, -1.0, -1.0, 2.0 / 32, 32, 32, 0.03, nodes, weights)
    assert np.allclose(
        _ref.heaviside_means(*args), _fast.heaviside_means(*args), atol=1e-13
    )


def test_heaviside_jacobian_agreement(rng, radius):
    nodes, weights = gauss_legendre_01(3)
    args = (
        radius.b0, radius.a, radius.b, -1.0, -1.0, 2.0 / 24, 24, 24, 0.04,
        nodes, weights, 5,
    )
    f_ref, j_ref = _ref.heaviside_means_jacobian(*args)
    f_fast, j_fast = _fast.heaviside_means_jacobian(*args)
    assert np.allclose(f_ref, f_fast, atol=1e-13)
    assert np.allclose(j_ref, j_fast, atol=1e-12)


def test_design_sums_agreement(rng):
    basis = DiskEigenBasis(220.0)
    ng = 2048
    tables = basis.radial_tables(ng)
    npts = 5000
    r = rng.uniform(0.0, 1.0, npts)
    phi = rng.uniform(0.0, 2.0 * np.pi, npts)
    vox = rng.integers(0, 40, npts)
    args = (r, phi, vox, 40, basis.m, basis.nf, basis.parity, tables, ng)
    s_ref = _ref.design_sums(*args)
    s_fast = _fast.design_sums(*args)
    assert np.allclose(s_ref, s_fast, atol=1e-11)


def test_design_sums_interpolation_accuracy(rng):
    # table interpolation against exact Bessel evaluation
    basis = DiskEigenBasis(400.0)
    ng = 8192
    tables = basis.radial_tables(ng)
    npts = 2000
    r = rng.uniform(0.0, 1.0, npts)
    phi = rng.uniform(0.0, 2.0 * np.pi, npts)
    vox = np.arange(npts, dtype=np.int64)
    approx = _kernels.design_sums(
        r, phi, vox, npts, basis.m, basis.nf, basis.parity, tables, ng
    )
    exact = basis.evaluate(r, phi)
    assert np.max(np.abs(approx - exact)) < 1e-6
