# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contracts as the numpy versions in _ref.py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, atan, atan2, cos, fmax, fmin, hypot, sin

cnp.import_array()


cdef double _radius_eval_c(double b0, const double[::1] a, const double[::1] b,
                           double phi) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0]
    cdef double out = b0
    if n == 0:
        return out
    cdef double c1 = cos(phi)
    cdef double s1 = sin(phi)
    cdef double cm1 = 1.0, sm1 = 0.0
    cdef double c = c1, s = s1
    cdef double cn, sn
    cdef Py_ssize_t k
    for k in range(1, n + 1):
        out += a[k - 1] * s + b[k - 1] * c
        cn = 2.0 * c1 * c - cm1
        sn = 2.0 * c1 * s - sm1
        cm1 = c
        sm1 = s
        c = cn
        s = sn
    return out


def rasterize_fractions(double b0, a_in, b_in, double ox, double oy, double h,
                        int nx, int ny, int s):
    cdef const double[::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    out_arr = np.zeros((nx, ny))
    cdef double[:, ::1] out = out_arr

    # global radius bounds on the 720 angle grid, Lipschitz safety margin
    cdef double lip = 0.0
    cdef Py_ssize_t k
    for k in range(a.shape[0]):
        lip += (k + 1) * (abs(a[k]) + abs(b[k]))
    cdef double g_lo = 1e300, g_hi = -1e300, rv
    cdef int gi
    for gi in range(720):
        rv = _radius_eval_c(b0, a, b, gi * (2.0 * M_PI / 720.0))
        g_lo = fmin(g_lo, rv)
        g_hi = fmax(g_hi, rv)
    cdef double g_margin = lip * (M_PI / 720.0)
    g_lo -= g_margin
    g_hi += g_margin

    cdef int ix, iy, p, q_, cnt
    cdef double x0, x1, y0, y1, rho_max, rho_min, ddx, ddy
    cdef double a1, a2, a3, a4, amin, amax, span, amid, r_lo, r_hi, margin
    cdef double rv1, rv2, rv3, px, py, r2, rvp
    cdef double step = h / s
    cdef bint undecided
    with nogil:
        for ix in range(nx):
            x0 = ox + ix * h
            x1 = x0 + h
            for iy in range(ny):
                y0 = oy + iy * h
                y1 = y0 + h
                rho_max = fmax(fmax(hypot(x0, y0), hypot(x0, y1)),
                               fmax(hypot(x1, y0), hypot(x1, y1)))
                ddx = fmax(fmax(x0, -x1), 0.0)
                ddy = fmax(fmax(y0, -y1), 0.0)
                rho_min = hypot(ddx, ddy)

                undecided = rho_min <= 0.0
                if not undecided:
                    a1 = atan2(y0, x0)
                    a2 = atan2(y1, x0)
                    a3 = atan2(y0, x1)
                    a4 = atan2(y1, x1)
                    amin = fmin(fmin(a1, a2), fmin(a3, a4))
                    amax = fmax(fmax(a1, a2), fmax(a3, a4))
                    if amax - amin > M_PI:
                        if a1 < 0.0:
                            a1 += 2.0 * M_PI
                        if a2 < 0.0:
                            a2 += 2.0 * M_PI
                        if a3 < 0.0:
                            a3 += 2.0 * M_PI
                        if a4 < 0.0:
                            a4 += 2.0 * M_PI
                        amin = fmin(fmin(a1, a2), fmin(a3, a4))
                        amax = fmax(fmax(a1, a2), fmax(a3, a4))
                    span = amax - amin
                    if span > M_PI - 1e-9:
                        undecided = True
                if undecided:
                    r_lo = g_lo
                    r_hi = g_hi
                else:
                    amid = 0.5 * (amin + amax)
                    rv1 = _radius_eval_c(b0, a, b, amin)
                    rv2 = _radius_eval_c(b0, a, b, amid)
                    rv3 = _radius_eval_c(b0, a, b, amax)
                    margin = lip * span * 0.25
                    r_lo = fmin(fmin(rv1, rv2), rv3) - margin
                    r_hi = fmax(fmax(rv1, rv2), rv3) + margin

                if rho_max < r_lo:
                    out[ix, iy] = 1.0
                elif rho_min > r_hi:
                    out[ix, iy] = 0.0
                else:
                    cnt = 0
                    for p in range(s):
                        px = x0 + (p + 0.5) * step
                        for q_ in range(s):
                            py = y0 + (q_ + 0.5) * step
                            r2 = px * px + py * py
                            rvp = _radius_eval_c(b0, a, b, atan2(py, px))
                            if r2 < rvp * rvp:
                                cnt += 1
                    out[ix, iy] = cnt / <double>(s * s)
    return out_arr


def heaviside_means(double b0, a_in, b_in, double ox, double oy, double h,
                    int nx, int ny, double gamma, nodes_in, weights_in):
    cdef const double[::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef const double[::1] nodes = np.ascontiguousarray(nodes_in, dtype=np.float64)
    cdef const double[::1] weights = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef int q = nodes.shape[0]
    out_arr = np.zeros((nx, ny))
    cdef double[:, ::1] out = out_arr
    cdef int ix, iy, p, q_
    cdef double x0, y0, px, py, t, acc
    with nogil:
        for ix in range(nx):
            x0 = ox + ix * h
            for iy in range(ny):
                y0 = oy + iy * h
                acc = 0.0
                for p in range(q):
                    px = x0 + nodes[p] * h
                    for q_ in range(q):
                        py = y0 + nodes[q_] * h
                        t = _radius_eval_c(b0, a, b, atan2(py, px)) - hypot(px, py)
                        acc += weights[p] * weights[q_] * (atan(t / gamma) / M_PI + 0.5)
                out[ix, iy] = acc
    return out_arr


def heaviside_means_jacobian(double b0, a_in, b_in, double ox, double oy, double h,
                             int nx, int ny, double gamma, nodes_in, weights_in,
                             int order):
    cdef const double[::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef const double[::1] nodes = np.ascontiguousarray(nodes_in, dtype=np.float64)
    cdef const double[::1] weights = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef int q = nodes.shape[0]
    means_arr = np.zeros((nx, ny))
    jac_arr = np.zeros((nx * ny, 2 * order + 1))
    cdef double[:, ::1] means = means_arr
    cdef double[:, ::1] jac = jac_arr
    cdef int ix, iy, p, q_, k
    cdef Py_ssize_t row
    cdef double x0, y0, px, py, phi, t, w, hp, acc
    cdef double c1, s1, cm1, sm1, c, s, cn, sn
    with nogil:
        for ix in range(nx):
            x0 = ox + ix * h
            for iy in range(ny):
                y0 = oy + iy * h
                row = ix * ny + iy
                acc = 0.0
                for p in range(q):
                    px = x0 + nodes[p] * h
                    for q_ in range(q):
                        py = y0 + nodes[q_] * h
                        phi = atan2(py, px)
                        t = _radius_eval_c(b0, a, b, phi) - hypot(px, py)
                        w = weights[p] * weights[q_]
                        acc += w * (atan(t / gamma) / M_PI + 0.5)
                        hp = w * (gamma / M_PI) / (gamma * gamma + t * t)
                        jac[row, 0] += hp
                        if order > 0:
                            c1 = cos(phi)
                            s1 = sin(phi)
                            cm1 = 1.0
                            sm1 = 0.0
                            c = c1
                            s = s1
                            for k in range(1, order + 1):
                                jac[row, k] += hp * s
                                jac[row, order + k] += hp * c
                                cn = 2.0 * c1 * c - cm1
                                sn = 2.0 * c1 * s - sm1
                                cm1 = c
                                sm1 = s
                                c = cn
                                s = sn
                means[ix, iy] = acc
    return means_arr, jac_arr


def design_sums(r_in, phi_in, vox_in, int n_ret, m_in, nf_in, parity_in,
                tables_in, int ng):
    cdef const double[::1] r_pts = np.ascontiguousarray(r_in, dtype=np.float64)
    cdef const double[::1] phi_pts = np.ascontiguousarray(phi_in, dtype=np.float64)
    cdef const long[::1] vox = np.ascontiguousarray(vox_in, dtype=np.int64)
    cdef const long[::1] m_arr = np.ascontiguousarray(m_in, dtype=np.int64)
    cdef const double[::1] nf = np.ascontiguousarray(nf_in, dtype=np.float64)
    cdef const long[::1] parity = np.ascontiguousarray(parity_in, dtype=np.int64)
    cdef const double[:, ::1] tables = np.ascontiguousarray(tables_in, dtype=np.float64)
    cdef Py_ssize_t npts = r_pts.shape[0]
    cdef Py_ssize_t nmodes = m_arr.shape[0]

    cdef long m_max = 0
    cdef Py_ssize_t j
    for j in range(nmodes):
        if m_arr[j] > m_max:
            m_max = m_arr[j]

    out_arr = np.zeros((n_ret, nmodes))
    cdef double[:, ::1] out = out_arr
    cosbuf_arr = np.empty(m_max + 1)
    sinbuf_arr = np.empty(m_max + 1)
    cdef double[::1] cosbuf = cosbuf_arr
    cdef double[::1] sinbuf = sinbuf_arr

    cdef Py_ssize_t ip, i
    cdef long v, m
    cdef double u, t, w0, w1, w2, w3, rad, c1, s1
    with nogil:
        for ip in range(npts):
            u = r_pts[ip] * ng
            i = <Py_ssize_t>u
            if i > ng - 1:
                i = ng - 1
            t = u - i
            w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
            w1 = (t * t - 1.0) * (t - 2.0) / 2.0
            w2 = -t * (t + 1.0) * (t - 2.0) / 2.0
            w3 = t * (t * t - 1.0) / 6.0

            cosbuf[0] = 1.0
            sinbuf[0] = 0.0
            if m_max > 0:
                c1 = cos(phi_pts[ip])
                s1 = sin(phi_pts[ip])
                cosbuf[1] = c1
                sinbuf[1] = s1
                for m in range(2, m_max + 1):
                    cosbuf[m] = 2.0 * c1 * cosbuf[m - 1] - cosbuf[m - 2]
                    sinbuf[m] = 2.0 * c1 * sinbuf[m - 1] - sinbuf[m - 2]

            v = vox[ip]
            for j in range(nmodes):
                rad = (w0 * tables[j, i] + w1 * tables[j, i + 1]
                       + w2 * tables[j, i + 2] + w3 * tables[j, i + 3])
                m = m_arr[j]
                if parity[j] == 0:
                    out[v, j] += nf[j] * rad * cosbuf[m]
                else:
                    out[v, j] += nf[j] * rad * sinbuf[m]
    return out_arr
