"""Pure-NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via the
ARTIGRAPH_PURE environment variable). Semantics are identical to
``_core``; the parity test suite holds both to the same outputs.
"""

import numpy as np
from scipy.spatial import cKDTree

IMPLEMENTATION = "python"


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based cluster labels; -1 marks noise.

    A point is core iff it has >= min_pts neighbors within eps (inclusive,
    counting itself). Clusters are seeded in index order, so a border point
    reachable from several clusters joins the one whose seed core has the
    lowest index. Labels are numbered by seed order.
    """
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return labels
    tree = cKDTree(points)
    neighbors = tree.query_ball_point(points, eps, workers=-1)
    core = np.fromiter((len(nb) >= min_pts for nb in neighbors), dtype=bool, count=n)

    cluster = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        labels[seed] = cluster
        stack = [seed]
        while stack:
            j = stack.pop()
            for m in neighbors[j]:
                if labels[m] == -1:
                    labels[m] = cluster
                    if core[m]:
                        stack.append(m)
        cluster += 1
    return labels


def projection_validity(points, rot_cw, t_cw, fx, fy, cx, cy, width, height, depth, depth_tol):
    """Project world points into a frame and flag the validly visible ones.

    rot_cw / t_cw map world coordinates into the camera frame. A point is
    valid iff its camera depth is > 0, its nearest pixel lies in bounds,
    and (when a depth raster is given) the raster agrees within depth_tol
    at that pixel; non-positive or non-finite raster entries are invalid.

    Returns (valid uint8, u, v, z); u and v are NaN where z <= 0.
    """
    p_cam = points @ rot_cw.T + t_cw
    z = p_cam[:, 2].copy()
    in_front = z > 0.0
    u = np.full(points.shape[0], np.nan)
    v = np.full(points.shape[0], np.nan)
    np.divide(fx * p_cam[:, 0], z, out=u, where=in_front)
    np.divide(fy * p_cam[:, 1], z, out=v, where=in_front)
    u[in_front] += cx
    v[in_front] += cy

    # nearest pixel, half-up to match the compiled kernel
    iu = np.floor(u + 0.5)
    iv = np.floor(v + 0.5)
    with np.errstate(invalid="ignore"):
        in_bounds = in_front & (iu >= 0) & (iu < width) & (iv >= 0) & (iv < height)
    valid = in_bounds.copy()
    if depth is not None and np.any(in_bounds):
        ii = np.nonzero(in_bounds)[0]
        d = depth[iv[ii].astype(np.intp), iu[ii].astype(np.intp)]
        ok = np.isfinite(d) & (d > 0.0) & (np.abs(z[ii] - d) <= depth_tol)
        valid[ii] = ok
    return valid.astype(np.uint8), u, v, z
