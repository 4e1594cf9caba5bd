"""Numpy lane of the hot kernels.

The compiled lane in ``_native.pyx`` implements the same three entry points with
identical signatures and semantics; ``slscan._kernels`` picks one at import time.

Conventions shared by both lanes:
  * positions and distances are float64 millimetres,
  * ray directions need not be unit length unless stated,
  * geometry ids index the concatenated (rect planes, boxes, triangles) blocks
    in that order, -1 means miss,
  * a hit counts only for parameters t > t_min (self-intersection guard).
"""

import numpy as np

_PARALLEL_EPS = 1e-15


def raycast(
    origins,
    dirs,
    plane_point,
    plane_normal,
    plane_u,
    plane_v,
    plane_half,
    box_center,
    box_rot,
    box_half,
    tri_v0,
    tri_v1,
    tri_v2,
    t_min=1e-9,
):
    """Nearest hit of N rays against rect planes, oriented boxes and triangles.

    Args:
        origins: (N, 3) ray origins.
        dirs: (N, 3) ray directions.
        plane_point: (P, 3) rectangle centers.
        plane_normal: (P, 3) unit normals.
        plane_u, plane_v: (P, 3) unit in-plane axes.
        plane_half: (P, 2) half extents along u and v.
        box_center: (B, 3) box centers.
        box_rot: (B, 3, 3) world-from-local rotation per box.
        box_half: (B, 3) half extents in the local frame.
        tri_v0, tri_v1, tri_v2: (T, 3) triangle corners.
        t_min: minimum accepted ray parameter.

    Returns:
        (t, geom_id, normal): (N,) float64 with inf for misses, (N,) int32 with
        -1 for misses, and (N, 3) surface normals (zeros for misses).
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_id = np.full(n, -1, dtype=np.int32)
    best_n = np.zeros((n, 3))

    gid = 0
    for i in range(plane_point.shape[0]):
        t, nrm = _rect_hit(
            origins, dirs, plane_point[i], plane_normal[i],
            plane_u[i], plane_v[i], plane_half[i], t_min,
        )
        _fold(best_t, best_id, best_n, t, nrm, gid)
        gid += 1
    for i in range(box_center.shape[0]):
        t, nrm = _box_hit(origins, dirs, box_center[i], box_rot[i], box_half[i], t_min)
        _fold(best_t, best_id, best_n, t, nrm, gid)
        gid += 1
    for i in range(tri_v0.shape[0]):
        t, nrm = _tri_hit(origins, dirs, tri_v0[i], tri_v1[i], tri_v2[i], t_min)
        _fold(best_t, best_id, best_n, t, nrm, gid)
        gid += 1
    return best_t, best_id, best_n


def _fold(best_t, best_id, best_n, t, nrm, gid):
    closer = t < best_t
    best_t[closer] = t[closer]
    best_id[closer] = gid
    best_n[closer] = nrm[closer]


def _rect_hit(origins, dirs, point, normal, uax, vax, half, t_min):
    denom = dirs @ normal
    num = (point - origins) @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(denom) > _PARALLEL_EPS, num / denom, np.inf)
        hit = origins + t[:, None] * dirs
        local = hit - point
        inside = (np.abs(local @ uax) <= half[0]) & (np.abs(local @ vax) <= half[1])
    t = np.where((t > t_min) & inside, t, np.inf)
    # Two-sided: report the normal facing the incoming ray.
    nrm = np.where((dirs @ normal)[:, None] > 0.0, -normal, normal)
    return t, np.broadcast_to(nrm, origins.shape).copy()


def _box_hit(origins, dirs, center, rot, half, t_min):
    ol = (origins - center) @ rot
    dl = dirs @ rot
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - ol) / dl
        t2 = (half - ol) / dl
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    # dl == 0 rows: the slab constrains nothing if the origin is inside it,
    # otherwise the ray misses. 0/0 NaNs come from rays lying on a slab face.
    flat = np.abs(dl) <= _PARALLEL_EPS
    inside_slab = np.abs(ol) <= half
    lo = np.where(flat, np.where(inside_slab, -np.inf, np.inf), lo)
    hi = np.where(flat, np.where(inside_slab, np.inf, -np.inf), hi)
    lo = np.nan_to_num(lo, nan=-np.inf)
    hi = np.nan_to_num(hi, nan=np.inf)
    near_ax = np.argmax(lo, axis=1)
    far_ax = np.argmin(hi, axis=1)
    tnear = lo[np.arange(lo.shape[0]), near_ax]
    tfar = hi[np.arange(hi.shape[0]), far_ax]
    valid = tnear <= tfar
    enter = valid & (tnear > t_min)
    exit_ = valid & ~enter & (tfar > t_min)
    t = np.where(enter, tnear, np.where(exit_, tfar, np.inf))
    axis = np.where(enter, near_ax, far_ax)
    rows = np.arange(origins.shape[0])
    sign = np.where(enter, -np.sign(dl[rows, axis]), np.sign(dl[rows, axis]))
    local_n = np.zeros_like(origins)
    local_n[rows, axis] = np.where(sign == 0.0, 1.0, sign)
    return t, local_n @ rot.T


def _tri_hit(origins, dirs, v0, v1, v2, t_min):
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(dirs, e2)
    det = pvec @ e1
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tvec = origins - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        v = np.einsum("ij,ij->i", qvec, dirs) * inv
        t = (qvec @ e2) * inv
    ok = (
        (np.abs(det) > _PARALLEL_EPS)
        & (u >= 0.0)
        & (v >= 0.0)
        & (u + v <= 1.0)
        & (t > t_min)
    )
    t = np.where(ok, t, np.inf)
    nrm = np.cross(e1, e2)
    nn = np.linalg.norm(nrm)
    nrm = nrm / nn if nn > 0 else nrm
    nrm = np.where((dirs @ nrm)[:, None] > 0.0, -nrm, nrm)
    return t, np.broadcast_to(nrm, origins.shape).copy()


def intersect_pairs(p, u, q, v, denom_eps=1e-12):
    """Midpoint intersection of N ray pairs (p + s*u, q + t*v).

    Returns (mid, gap, s, t, ok); entries with |denominator| < denom_eps are
    flagged not ok and their outputs are NaN.

    The 2x2 solve runs in extended precision: its conditioning grows as
    1/sin^2 of the angle between the directions, and plain double arithmetic
    already drifts above 1e-9 mm for pairs a fraction of a degree apart.
    """
    p = np.asarray(p, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    ul = u.astype(np.longdouble)
    vl = v.astype(np.longdouble)
    w = p.astype(np.longdouble) - q.astype(np.longdouble)
    uu = np.einsum("ij,ij->i", ul, ul)
    vv = np.einsum("ij,ij->i", vl, vl)
    uv = np.einsum("ij,ij->i", vl, ul)
    wu = np.einsum("ij,ij->i", w, ul)
    wv = np.einsum("ij,ij->i", w, vl)
    denom = uv * uv - vv * uu
    ok = np.asarray(np.abs(denom) >= denom_eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        sl = (wu * vv - uv * wv) / denom
        tl = (uv * wu - uu * wv) / denom
    a = p.astype(np.longdouble) + sl[:, None] * ul
    b = q.astype(np.longdouble) + tl[:, None] * vl
    mid = (0.5 * (a + b)).astype(np.float64)
    diff = a - b
    gap = np.sqrt(np.einsum("ij,ij->i", diff, diff)).astype(np.float64)
    s = sl.astype(np.float64)
    t = tl.astype(np.float64)
    bad = ~ok
    s[bad] = np.nan
    t[bad] = np.nan
    mid[bad] = np.nan
    gap[bad] = np.nan
    return mid, gap, s, t, ok


def classify_stack(stack, direct_idx, inverse_idx, min_contrast):
    """Classify per-pixel bits from direct/inverse frame pairs.

    Args:
        stack: (F, H, W) uint8 captured frames.
        direct_idx: (K,) frame index of each bit's direct pattern, MSB first.
        inverse_idx: (K,) frame index of each bit's inverse pattern.
        min_contrast: minimum |direct - inverse| to call a bit.

    Returns:
        (codes, bad): (H, W) uint32 codes assembled MSB first, and a (H, W)
        bool mask of pixels with at least one undecodable bit.
    """
    direct = stack[np.asarray(direct_idx, dtype=np.intp)].astype(np.int16)
    inverse = stack[np.asarray(inverse_idx, dtype=np.intp)].astype(np.int16)
    diff = direct - inverse
    one = diff > min_contrast
    zero = diff < -min_contrast
    bad = ~(one | zero)
    k = direct.shape[0]
    codes = np.zeros(stack.shape[1:], dtype=np.uint32)
    for i in range(k):
        codes |= one[i].astype(np.uint32) << np.uint32(k - 1 - i)
    return codes, bad.any(axis=0)
