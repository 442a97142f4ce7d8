"""Pure numpy implementation of the hot kernels.

The compiled extension in ``_fast.pyx`` mirrors these functions exactly;
this module is the import-time fallback and the behavioural reference
for the kernel agreement tests.

Shared conventions:
  * radius coefficients come as (b0, a, b) with a[k-1], b[k-1] the order-k
    sine/cosine coefficients;
  * voxel (ix, iy) covers [ox+ix*h, ox+(ix+1)*h] x [oy+iy*h, oy+(iy+1)*h]
    and flattens to linear index ix*ny + iy;
  * quadrature nodes/weights live on [0, 1] with weights summing to 1, so
    every voxel quantity is an integral mean.
"""

import numpy as np

_AMB_CHUNK = 262144  # subsample points processed per block


def _radius_eval(b0, a, b, phi):
    out = np.full(np.shape(phi), float(b0))
    for k in range(1, len(a) + 1):
        out += a[k - 1] * np.sin(k * phi) + b[k - 1] * np.cos(k * phi)
    return out


def _lipschitz(a, b):
    k = np.arange(1, len(a) + 1, dtype=float)
    return float(np.sum(k * (np.abs(np.asarray(a)) + np.abs(np.asarray(b)))))


def rasterize_fractions(b0, a, b, ox, oy, h, nx, ny, s):
    """Per-voxel fraction of the s*s midpoint subsample lying strictly inside
    the star domain |xi| < R(phi(xi)).

    Voxels are first classified with conservative radius/angle bounds; only
    the undecided band near the boundary is subsampled, which reproduces the
    brute-force result exactly at a fraction of the cost.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ix = np.arange(nx, dtype=float)
    iy = np.arange(ny, dtype=float)
    x0 = ox + ix * h
    y0 = oy + iy * h
    X0, Y0 = np.meshgrid(x0, y0, indexing="ij")
    X1, Y1 = X0 + h, Y0 + h

    corners = ((X0, Y0), (X0, Y1), (X1, Y0), (X1, Y1))
    rho_max = np.maximum.reduce([np.hypot(cx, cy) for cx, cy in corners])
    ddx = np.maximum(np.maximum(X0, -X1), 0.0)
    ddy = np.maximum(np.maximum(Y0, -Y1), 0.0)
    rho_min = np.hypot(ddx, ddy)
    near_origin = rho_min <= 0.0

    angs = [np.arctan2(cy, cx) for cx, cy in corners]
    amin = np.minimum.reduce(angs)
    amax = np.maximum.reduce(angs)
    crosses = (amax - amin) > np.pi
    shifted = [np.where(crosses & (aa < 0.0), aa + 2.0 * np.pi, aa) for aa in angs]
    amin = np.minimum.reduce(shifted)
    amax = np.maximum.reduce(shifted)
    span = amax - amin
    undecided_angle = near_origin | (span > np.pi - 1e-9)

    lip = _lipschitz(a, b)
    amid = 0.5 * (amin + amax)
    rv = np.stack([_radius_eval(b0, a, b, ang) for ang in (amin, amid, amax)])
    margin = lip * span * 0.25
    r_lo = rv.min(axis=0) - margin
    r_hi = rv.max(axis=0) + margin

    # fallback bounds for voxels whose angular span is unusable
    phi_grid = np.arange(720) * (2.0 * np.pi / 720.0)
    r_all = _radius_eval(b0, a, b, phi_grid)
    g_margin = lip * (np.pi / 720.0)
    g_lo = float(r_all.min()) - g_margin
    g_hi = float(r_all.max()) + g_margin
    r_lo = np.where(undecided_angle, g_lo, r_lo)
    r_hi = np.where(undecided_angle, g_hi, r_hi)

    inside = rho_max < r_lo
    outside = rho_min > r_hi

    frac = np.where(inside, 1.0, 0.0)
    amb = np.argwhere(~inside & ~outside)
    if amb.size:
        offs = (np.arange(s) + 0.5) * (h / s)
        ss = s * s
        block = max(1, _AMB_CHUNK // ss)
        for start in range(0, amb.shape[0], block):
            part = amb[start : start + block]
            px = (ox + part[:, 0] * h)[:, None, None] + offs[None, :, None]
            py = (oy + part[:, 1] * h)[:, None, None] + offs[None, None, :]
            rr = np.hypot(px, py)
            phi = np.arctan2(py, px)
            ins = rr < _radius_eval(b0, a, b, phi)
            frac[part[:, 0], part[:, 1]] = ins.reshape(-1, ss).mean(axis=1)
    return frac


def _quad_points(ox, oy, h, nx, ny, nodes):
    px = ox + (np.arange(nx)[:, None] + nodes[None, :]) * h
    py = oy + (np.arange(ny)[:, None] + nodes[None, :]) * h
    return px.reshape(-1), py.reshape(-1)


def heaviside_means(b0, a, b, ox, oy, h, nx, ny, gamma, nodes, weights):
    """Voxel means of H_gamma(R(phi(xi)) - |xi|) by tensor Gauss-Legendre
    quadrature, H_gamma(x) = atan(x/gamma)/pi + 1/2."""
    q = len(nodes)
    xs, ys = _quad_points(ox, oy, h, nx, ny, np.asarray(nodes))
    rr = np.hypot(xs[:, None], ys[None, :])
    phi = np.arctan2(ys[None, :], xs[:, None])
    t = _radius_eval(b0, a, b, phi) - rr
    hg = np.arctan(t / gamma) / np.pi + 0.5
    hg = hg.reshape(nx, q, ny, q)
    w = np.asarray(weights)
    return np.einsum("ipjq,p,q->ij", hg, w, w)


def heaviside_means_jacobian(b0, a, b, ox, oy, h, nx, ny, gamma, nodes, weights, order):
    """Voxel means of H_gamma plus the derivative matrix with respect to the
    radius coefficients [b0, a_1..a_N, b_1..b_N], same quadrature nodes.

    Returns (means (nx, ny), jac (nx*ny, 2*order+1)).
    """
    q = len(nodes)
    xs, ys = _quad_points(ox, oy, h, nx, ny, np.asarray(nodes))
    rr = np.hypot(xs[:, None], ys[None, :])
    phi = np.arctan2(ys[None, :], xs[:, None])
    t = _radius_eval(b0, a, b, phi) - rr
    hg = np.arctan(t / gamma) / np.pi + 0.5
    hp = (gamma / np.pi) / (gamma * gamma + t * t)
    w = np.asarray(weights)

    means = np.einsum("ipjq,p,q->ij", hg.reshape(nx, q, ny, q), w, w)
    jac = np.empty((nx * ny, 2 * order + 1))

    def contract(field):
        return np.einsum("ipjq,p,q->ij", field.reshape(nx, q, ny, q), w, w).reshape(-1)

    jac[:, 0] = contract(hp)
    for k in range(1, order + 1):
        jac[:, k] = contract(hp * np.sin(k * phi))
        jac[:, order + k] = contract(hp * np.cos(k * phi))
    return means, jac


def design_sums(r_pts, phi_pts, vox_idx, n_ret, mode_m, mode_nf, mode_parity, tables, ng):
    """Per-voxel sums of eigenbasis values at reference-domain sample points.

    The radial factors J_m(j_mn * r) come from per-mode lookup tables on a
    uniform r-grid of ng intervals (one ghost node on each side), combined
    with 4-point Lagrange interpolation; angular factors are cos/sin(m*phi).
    Returns the (n_ret, nmodes) matrix of sums over points grouped by
    ``vox_idx``; dividing by per-voxel point counts is up to the caller.
    """
    r_pts = np.asarray(r_pts, dtype=float)
    phi_pts = np.asarray(phi_pts, dtype=float)
    u = r_pts * ng
    i = np.minimum(u.astype(np.int64), ng - 1)
    t = u - i
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t * t - 1.0) * (t - 2.0) / 2.0
    w2 = -t * (t + 1.0) * (t - 2.0) / 2.0
    w3 = t * (t * t - 1.0) / 6.0

    cos_cache = {}
    sin_cache = {}
    out = np.empty((n_ret, len(mode_m)))
    for j in range(len(mode_m)):
        m = int(mode_m[j])
        tab = tables[j]
        rad = w0 * tab[i] + w1 * tab[i + 1] + w2 * tab[i + 2] + w3 * tab[i + 3]
        if mode_parity[j] == 0:
            if m not in cos_cache:
                cos_cache[m] = np.cos(m * phi_pts)
            ang = cos_cache[m]
        else:
            if m not in sin_cache:
                sin_cache[m] = np.sin(m * phi_pts)
            ang = sin_cache[m]
        out[:, j] = np.bincount(vox_idx, weights=mode_nf[j] * rad * ang, minlength=n_ret)
    return out
