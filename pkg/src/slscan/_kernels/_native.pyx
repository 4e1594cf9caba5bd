# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled lane of the hot kernels. Contract documented in pure.py."""

import numpy as np

from libc.math cimport INFINITY, NAN, fabs, fabsl, sqrt, sqrtl

cdef double PARALLEL_EPS = 1e-15


cdef inline double _dot3(double ax, double ay, double az,
                         double bx, double by, double bz) nogil:
    return ax * bx + ay * by + az * bz


def raycast(origins, dirs,
            plane_point, plane_normal, plane_u, plane_v, plane_half,
            box_center, box_rot, box_half,
            tri_v0, tri_v1, tri_v2,
            double t_min=1e-9):
    cdef const double[:, ::1] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef const double[:, ::1] d = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef const double[:, ::1] pp = np.ascontiguousarray(plane_point, dtype=np.float64)
    cdef const double[:, ::1] pn = np.ascontiguousarray(plane_normal, dtype=np.float64)
    cdef const double[:, ::1] pu = np.ascontiguousarray(plane_u, dtype=np.float64)
    cdef const double[:, ::1] pv = np.ascontiguousarray(plane_v, dtype=np.float64)
    cdef const double[:, ::1] ph = np.ascontiguousarray(plane_half, dtype=np.float64)
    cdef const double[:, ::1] bc = np.ascontiguousarray(box_center, dtype=np.float64)
    cdef const double[:, :, ::1] br = np.ascontiguousarray(box_rot, dtype=np.float64)
    cdef const double[:, ::1] bh = np.ascontiguousarray(box_half, dtype=np.float64)
    cdef const double[:, ::1] t0 = np.ascontiguousarray(tri_v0, dtype=np.float64)
    cdef const double[:, ::1] t1v = np.ascontiguousarray(tri_v1, dtype=np.float64)
    cdef const double[:, ::1] t2v = np.ascontiguousarray(tri_v2, dtype=np.float64)

    cdef Py_ssize_t n = o.shape[0]
    cdef Py_ssize_t n_pl = pp.shape[0]
    cdef Py_ssize_t n_bx = bc.shape[0]
    cdef Py_ssize_t n_tr = t0.shape[0]

    t_out_arr = np.full(n, np.inf)
    id_out_arr = np.full(n, -1, dtype=np.int32)
    n_out_arr = np.zeros((n, 3))
    cdef double[::1] t_out = t_out_arr
    cdef int[::1] id_out = id_out_arr
    cdef double[:, ::1] n_out = n_out_arr

    cdef Py_ssize_t i, j, k, ax
    cdef double ox, oy, oz, dx, dy, dz
    cdef double best, t, denom, lx, ly, lz, side
    cdef double olx, oly, olz, dlx, dly, dlz
    cdef double tnear, tfar, lo, hi, inv, comp_o, comp_d, half
    cdef double e1x, e1y, e1z, e2x, e2y, e2z, pvx, pvy, pvz
    cdef double tvx, tvy, tvz, qvx, qvy, qvz, det, uu, vv, nn
    cdef double nx, ny, nz
    cdef int near_ax, far_ax, near_sg, far_sg, entering
    cdef int best_id

    with nogil:
        for i in range(n):
            ox = o[i, 0]; oy = o[i, 1]; oz = o[i, 2]
            dx = d[i, 0]; dy = d[i, 1]; dz = d[i, 2]
            best = INFINITY
            best_id = -1
            nx = 0.0; ny = 0.0; nz = 0.0

            for j in range(n_pl):
                denom = _dot3(dx, dy, dz, pn[j, 0], pn[j, 1], pn[j, 2])
                if fabs(denom) <= PARALLEL_EPS:
                    continue
                t = (_dot3(pp[j, 0] - ox, pp[j, 1] - oy, pp[j, 2] - oz,
                           pn[j, 0], pn[j, 1], pn[j, 2])) / denom
                if t <= t_min or t >= best:
                    continue
                lx = ox + t * dx - pp[j, 0]
                ly = oy + t * dy - pp[j, 1]
                lz = oz + t * dz - pp[j, 2]
                if fabs(_dot3(lx, ly, lz, pu[j, 0], pu[j, 1], pu[j, 2])) > ph[j, 0]:
                    continue
                if fabs(_dot3(lx, ly, lz, pv[j, 0], pv[j, 1], pv[j, 2])) > ph[j, 1]:
                    continue
                best = t
                best_id = <int> j
                if denom > 0.0:
                    nx = -pn[j, 0]; ny = -pn[j, 1]; nz = -pn[j, 2]
                else:
                    nx = pn[j, 0]; ny = pn[j, 1]; nz = pn[j, 2]

            for j in range(n_bx):
                # local frame: columns of br[j] are the box axes in world space
                olx = _dot3(ox - bc[j, 0], oy - bc[j, 1], oz - bc[j, 2],
                            br[j, 0, 0], br[j, 1, 0], br[j, 2, 0])
                oly = _dot3(ox - bc[j, 0], oy - bc[j, 1], oz - bc[j, 2],
                            br[j, 0, 1], br[j, 1, 1], br[j, 2, 1])
                olz = _dot3(ox - bc[j, 0], oy - bc[j, 1], oz - bc[j, 2],
                            br[j, 0, 2], br[j, 1, 2], br[j, 2, 2])
                dlx = _dot3(dx, dy, dz, br[j, 0, 0], br[j, 1, 0], br[j, 2, 0])
                dly = _dot3(dx, dy, dz, br[j, 0, 1], br[j, 1, 1], br[j, 2, 1])
                dlz = _dot3(dx, dy, dz, br[j, 0, 2], br[j, 1, 2], br[j, 2, 2])
                tnear = -INFINITY
                tfar = INFINITY
                near_ax = -1
                far_ax = -1
                near_sg = 1
                far_sg = 1
                for ax in range(3):
                    if ax == 0:
                        comp_o = olx; comp_d = dlx
                    elif ax == 1:
                        comp_o = oly; comp_d = dly
                    else:
                        comp_o = olz; comp_d = dlz
                    half = bh[j, ax]
                    if fabs(comp_d) <= PARALLEL_EPS:
                        if fabs(comp_o) > half:
                            tnear = INFINITY
                            tfar = -INFINITY
                            break
                        continue
                    inv = 1.0 / comp_d
                    lo = (-half - comp_o) * inv
                    hi = (half - comp_o) * inv
                    if lo > hi:
                        lo, hi = hi, lo
                    if lo > tnear:
                        tnear = lo
                        near_ax = <int> ax
                        near_sg = -1 if comp_d > 0.0 else 1
                    if hi < tfar:
                        tfar = hi
                        far_ax = <int> ax
                        far_sg = 1 if comp_d > 0.0 else -1
                if tnear > tfar:
                    continue
                entering = 1
                t = tnear
                ax = near_ax
                side = near_sg
                if t <= t_min:
                    entering = 0
                    t = tfar
                    ax = far_ax
                    side = far_sg
                if t <= t_min or t >= best or ax < 0:
                    continue
                best = t
                best_id = <int> (n_pl + j)
                nx = side * br[j, 0, ax]
                ny = side * br[j, 1, ax]
                nz = side * br[j, 2, ax]

            for j in range(n_tr):
                e1x = t1v[j, 0] - t0[j, 0]
                e1y = t1v[j, 1] - t0[j, 1]
                e1z = t1v[j, 2] - t0[j, 2]
                e2x = t2v[j, 0] - t0[j, 0]
                e2y = t2v[j, 1] - t0[j, 1]
                e2z = t2v[j, 2] - t0[j, 2]
                pvx = dy * e2z - dz * e2y
                pvy = dz * e2x - dx * e2z
                pvz = dx * e2y - dy * e2x
                det = _dot3(e1x, e1y, e1z, pvx, pvy, pvz)
                if fabs(det) <= PARALLEL_EPS:
                    continue
                inv = 1.0 / det
                tvx = ox - t0[j, 0]
                tvy = oy - t0[j, 1]
                tvz = oz - t0[j, 2]
                uu = _dot3(tvx, tvy, tvz, pvx, pvy, pvz) * inv
                if uu < 0.0 or uu > 1.0:
                    continue
                qvx = tvy * e1z - tvz * e1y
                qvy = tvz * e1x - tvx * e1z
                qvz = tvx * e1y - tvy * e1x
                vv = _dot3(qvx, qvy, qvz, dx, dy, dz) * inv
                if vv < 0.0 or uu + vv > 1.0:
                    continue
                t = _dot3(qvx, qvy, qvz, e2x, e2y, e2z) * inv
                if t <= t_min or t >= best:
                    continue
                best = t
                best_id = <int> (n_pl + n_bx + j)
                nx = e1y * e2z - e1z * e2y
                ny = e1z * e2x - e1x * e2z
                nz = e1x * e2y - e1y * e2x
                nn = sqrt(nx * nx + ny * ny + nz * nz)
                if nn > 0.0:
                    nx /= nn; ny /= nn; nz /= nn
                if _dot3(dx, dy, dz, nx, ny, nz) > 0.0:
                    nx = -nx; ny = -ny; nz = -nz

            t_out[i] = best
            id_out[i] = best_id
            n_out[i, 0] = nx
            n_out[i, 1] = ny
            n_out[i, 2] = nz

    return t_out_arr, id_out_arr, n_out_arr


def intersect_pairs(p, u, q, v, double denom_eps=1e-12):
    cdef const double[:, ::1] pm = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[:, ::1] um = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] qm = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, ::1] vm = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = pm.shape[0]

    mid_arr = np.empty((n, 3))
    gap_arr = np.empty(n)
    s_arr = np.empty(n)
    t_arr = np.empty(n)
    ok_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] mid = mid_arr
    cdef double[::1] gap = gap_arr
    cdef double[::1] s_out = s_arr
    cdef double[::1] t_out = t_arr
    cdef unsigned char[::1] ok = ok_arr

    # Extended precision: the solve's conditioning grows as 1/sin^2 of the
    # angle between the directions, and plain doubles drift above 1e-9 mm
    # for pairs under a degree apart. Mirrors the longdouble path in pure.py.
    cdef Py_ssize_t i
    cdef long double wx, wy, wz, uu, vv, uv, wu, wv, denom, s, t
    cdef long double ax, ay, az, bx, by, bz

    with nogil:
        for i in range(n):
            wx = (<long double> pm[i, 0]) - qm[i, 0]
            wy = (<long double> pm[i, 1]) - qm[i, 1]
            wz = (<long double> pm[i, 2]) - qm[i, 2]
            uu = (<long double> um[i, 0]) * um[i, 0] \
                + (<long double> um[i, 1]) * um[i, 1] \
                + (<long double> um[i, 2]) * um[i, 2]
            vv = (<long double> vm[i, 0]) * vm[i, 0] \
                + (<long double> vm[i, 1]) * vm[i, 1] \
                + (<long double> vm[i, 2]) * vm[i, 2]
            uv = (<long double> vm[i, 0]) * um[i, 0] \
                + (<long double> vm[i, 1]) * um[i, 1] \
                + (<long double> vm[i, 2]) * um[i, 2]
            wu = wx * um[i, 0] + wy * um[i, 1] + wz * um[i, 2]
            wv = wx * vm[i, 0] + wy * vm[i, 1] + wz * vm[i, 2]
            denom = uv * uv - vv * uu
            if fabsl(denom) < denom_eps:
                mid[i, 0] = NAN; mid[i, 1] = NAN; mid[i, 2] = NAN
                gap[i] = NAN
                s_out[i] = NAN
                t_out[i] = NAN
                ok[i] = 0
                continue
            s = (wu * vv - uv * wv) / denom
            t = (uv * wu - uu * wv) / denom
            ax = pm[i, 0] + s * um[i, 0]
            ay = pm[i, 1] + s * um[i, 1]
            az = pm[i, 2] + s * um[i, 2]
            bx = qm[i, 0] + t * vm[i, 0]
            by = qm[i, 1] + t * vm[i, 1]
            bz = qm[i, 2] + t * vm[i, 2]
            mid[i, 0] = <double> (0.5 * (ax + bx))
            mid[i, 1] = <double> (0.5 * (ay + by))
            mid[i, 2] = <double> (0.5 * (az + bz))
            gap[i] = <double> sqrtl((ax - bx) * (ax - bx)
                                    + (ay - by) * (ay - by)
                                    + (az - bz) * (az - bz))
            s_out[i] = <double> s
            t_out[i] = <double> t
            ok[i] = 1

    return mid_arr, gap_arr, s_arr, t_arr, ok_arr.astype(bool)


def classify_stack(stack, direct_idx, inverse_idx, int min_contrast):
    cdef const unsigned char[:, :, ::1] st = np.ascontiguousarray(stack, dtype=np.uint8)
    cdef const Py_ssize_t[::1] di = np.ascontiguousarray(direct_idx, dtype=np.intp)
    cdef const Py_ssize_t[::1] ii = np.ascontiguousarray(inverse_idx, dtype=np.intp)
    cdef Py_ssize_t k = di.shape[0]
    cdef Py_ssize_t h = st.shape[1]
    cdef Py_ssize_t w = st.shape[2]

    codes_arr = np.zeros((h, w), dtype=np.uint32)
    bad_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned int[:, ::1] codes = codes_arr
    cdef unsigned char[:, ::1] bad = bad_arr

    cdef Py_ssize_t b, y, x
    cdef int diff
    cdef unsigned int bit

    with nogil:
        for b in range(k):
            bit = <unsigned int> 1 << <unsigned int> (k - 1 - b)
            for y in range(h):
                for x in range(w):
                    diff = (<int> st[di[b], y, x]) - (<int> st[ii[b], y, x])
                    if diff > min_contrast:
                        codes[y, x] |= bit
                    elif diff >= -min_contrast:
                        bad[y, x] = 1

    return codes_arr, bad_arr.astype(bool)
