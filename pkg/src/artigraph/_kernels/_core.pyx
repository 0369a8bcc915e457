# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: grid-accelerated DBSCAN and projection validity.

Same observable behavior as the NumPy fallback; clustering uses a uniform
grid with cell size eps so neighbor candidates come from the 27 adjacent
cells instead of the full cloud.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, isfinite, fabs

IMPLEMENTATION = "compiled"


cdef inline Py_ssize_t _lower_bound(cnp.int64_t[::1] a, cnp.int64_t key) nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


def dbscan_labels(const cnp.float64_t[:, ::1] points, double eps, int min_pts):
    """Density-based cluster labels; -1 marks noise.

    Core iff >= min_pts neighbors within eps (inclusive, counting itself);
    clusters seeded in index order; border points join the earliest-seeded
    reachable cluster. Matches fallback.dbscan_labels exactly.
    """
    cdef Py_ssize_t n = points.shape[0]
    labels_np = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return labels_np

    pts_np = np.asarray(points)
    mins = pts_np.min(axis=0)
    # cell coordinates at size eps; int64 linearization over occupied extent
    cells_np = np.floor((pts_np - mins) / eps).astype(np.int64)
    spans = cells_np.max(axis=0) + 1
    cell_ids_np = (cells_np[:, 0] * spans[1] + cells_np[:, 1]) * spans[2] + cells_np[:, 2]
    order_np = np.argsort(cell_ids_np, kind="stable").astype(np.int64)
    sorted_ids_np = cell_ids_np[order_np]

    cdef cnp.int64_t[::1] cell_ids = cell_ids_np
    cdef cnp.int64_t[:, ::1] cells = cells_np
    cdef cnp.int64_t[::1] order = order_np
    cdef cnp.int64_t[::1] sorted_ids = sorted_ids_np
    cdef cnp.int32_t[::1] labels = labels_np
    cdef cnp.uint8_t[::1] core = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] stack = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] neigh = np.empty(n, dtype=np.int64)

    cdef double eps2 = eps * eps
    cdef cnp.int64_t sx = spans[1] * spans[2], sy = spans[2]
    cdef cnp.int64_t nx = spans[0], ny = spans[1], nz = spans[2]
    cdef Py_ssize_t i, j, k, m, count, top, pos
    cdef cnp.int64_t gx, gy, gz, dx, dy, dz, key
    cdef double px, py, pz, ddx, ddy, ddz
    cdef int cluster = 0

    # pass 1: core flags
    with nogil:
        for i in range(n):
            px = points[i, 0]; py = points[i, 1]; pz = points[i, 2]
            gx = cells[i, 0]; gy = cells[i, 1]; gz = cells[i, 2]
            count = 0
            for dx in range(-1, 2):
                if gx + dx < 0 or gx + dx >= nx:
                    continue
                for dy in range(-1, 2):
                    if gy + dy < 0 or gy + dy >= ny:
                        continue
                    for dz in range(-1, 2):
                        if gz + dz < 0 or gz + dz >= nz:
                            continue
                        key = (gx + dx) * sx + (gy + dy) * sy + (gz + dz)
                        pos = _lower_bound(sorted_ids, key)
                        while pos < n and sorted_ids[pos] == key:
                            j = order[pos]
                            ddx = points[j, 0] - px
                            ddy = points[j, 1] - py
                            ddz = points[j, 2] - pz
                            if ddx * ddx + ddy * ddy + ddz * ddz <= eps2:
                                count += 1
                            pos += 1
            if count >= min_pts:
                core[i] = 1

    # pass 2: expansion, seeded in index order
    for i in range(n):
        if core[i] == 0 or labels[i] != -1:
            continue
        labels[i] = cluster
        top = 0
        stack[top] = i
        top += 1
        with nogil:
            while top > 0:
                top -= 1
                k = stack[top]
                px = points[k, 0]; py = points[k, 1]; pz = points[k, 2]
                gx = cells[k, 0]; gy = cells[k, 1]; gz = cells[k, 2]
                for dx in range(-1, 2):
                    if gx + dx < 0 or gx + dx >= nx:
                        continue
                    for dy in range(-1, 2):
                        if gy + dy < 0 or gy + dy >= ny:
                            continue
                        for dz in range(-1, 2):
                            if gz + dz < 0 or gz + dz >= nz:
                                continue
                            key = (gx + dx) * sx + (gy + dy) * sy + (gz + dz)
                            pos = _lower_bound(sorted_ids, key)
                            while pos < n and sorted_ids[pos] == key:
                                m = order[pos]
                                if labels[m] == -1:
                                    ddx = points[m, 0] - px
                                    ddy = points[m, 1] - py
                                    ddz = points[m, 2] - pz
                                    if ddx * ddx + ddy * ddy + ddz * ddz <= eps2:
                                        labels[m] = cluster
                                        if core[m] == 1:
                                            stack[top] = m
                                            top += 1
                                pos += 1
        cluster += 1
    return labels_np


def projection_validity(const cnp.float64_t[:, ::1] points,
                        const cnp.float64_t[:, ::1] rot_cw,
                        const cnp.float64_t[::1] t_cw,
                        double fx, double fy, double cx, double cy,
                        int width, int height,
                        depth_raster, double depth_tol):
    """Project world points into a frame and flag the validly visible ones.

    See fallback.projection_validity for the validity rule.
    """
    cdef Py_ssize_t n = points.shape[0]
    valid_np = np.zeros(n, dtype=np.uint8)
    u_np = np.full(n, np.nan)
    v_np = np.full(n, np.nan)
    z_np = np.empty(n)

    cdef cnp.uint8_t[::1] valid = valid_np
    cdef cnp.float64_t[::1] u = u_np
    cdef cnp.float64_t[::1] v = v_np
    cdef cnp.float64_t[::1] z = z_np
    cdef const cnp.float64_t[:, ::1] depth
    cdef bint has_depth = depth_raster is not None
    if has_depth:
        depth = depth_raster

    cdef Py_ssize_t i
    cdef double xc, yc, zc, uu, vv, d
    cdef Py_ssize_t iu, iv
    cdef double r00 = rot_cw[0, 0], r01 = rot_cw[0, 1], r02 = rot_cw[0, 2]
    cdef double r10 = rot_cw[1, 0], r11 = rot_cw[1, 1], r12 = rot_cw[1, 2]
    cdef double r20 = rot_cw[2, 0], r21 = rot_cw[2, 1], r22 = rot_cw[2, 2]
    cdef double t0 = t_cw[0], t1 = t_cw[1], t2 = t_cw[2]

    with nogil:
        for i in range(n):
            xc = r00 * points[i, 0] + r01 * points[i, 1] + r02 * points[i, 2] + t0
            yc = r10 * points[i, 0] + r11 * points[i, 1] + r12 * points[i, 2] + t1
            zc = r20 * points[i, 0] + r21 * points[i, 1] + r22 * points[i, 2] + t2
            z[i] = zc
            if zc <= 0.0:
                continue
            uu = fx * xc / zc + cx
            vv = fy * yc / zc + cy
            u[i] = uu
            v[i] = vv
            iu = <Py_ssize_t>floor(uu + 0.5)
            iv = <Py_ssize_t>floor(vv + 0.5)
            if iu < 0 or iu >= width or iv < 0 or iv >= height:
                continue
            if has_depth:
                d = depth[iv, iu]
                if isfinite(d) and d > 0.0 and fabs(zc - d) <= depth_tol:
                    valid[i] = 1
            else:
                valid[i] = 1
    return valid_np, u_np, v_np, z_np
