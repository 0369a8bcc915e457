"""Independent brute-force oracles used by the module and acceptance tests.

These deliberately re-derive results from first principles (full distance
matrices, exhaustive grids) and never call the library code paths they
check.
"""

import numpy as np


def dbscan_reference(points, eps, min_pts):
    """O(n^2) density clustering with the same deterministic tie rules:
    clusters numbered by their lowest core index, border points joining the
    earliest-numbered reachable cluster."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    labels = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return labels
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    neigh = d2 <= eps * eps
    core = neigh.sum(axis=1) >= min_pts

    comp = np.full(n, -1)
    n_comp = 0
    for i in range(n):
        if not core[i] or comp[i] != -1:
            continue
        comp[i] = n_comp
        queue = [i]
        while queue:
            j = queue.pop()
            for m in np.nonzero(neigh[j] & core)[0]:
                if comp[m] == -1:
                    comp[m] = n_comp
                    queue.append(m)
        n_comp += 1

    labels[core] = comp[core]
    for i in np.nonzero(~core)[0]:
        neighbor_cores = np.nonzero(neigh[i] & core)[0]
        if neighbor_cores.size:
            labels[i] = comp[neighbor_cores].min()
    return labels


def cosine_ranking(features_by_id, query):
    """All (id, score) sorted by descending cosine, ties by ascending id."""
    query = np.asarray(query, dtype=float)
    scored = [(nid, float(np.dot(f, query))) for nid, f in features_by_id.items()]
    return sorted(scored, key=lambda t: (-t[1], t[0]))


def fibonacci_directions(n):
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(n)
    z = 1.0 - 2.0 * (i + 0.5) / n
    rho = np.sqrt(1.0 - z * z)
    return np.column_stack([rho * np.cos(golden * i), rho * np.sin(golden * i), z])


def grid_line_fit(points, n_dirs=8000):
    """Exhaustive direction search for the best-fit line through the centroid.

    Returns (direction, rmse, angular resolution in radians).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    centered = pts - pts.mean(axis=0)
    dirs = fibonacci_directions(n_dirs)
    proj = centered @ dirs.T  # (n, D)
    sq = np.sum(centered**2, axis=1)[:, None]
    mse = np.mean(sq - proj**2, axis=0)
    best = int(np.argmin(mse))
    resolution = np.sqrt(4.0 * np.pi / n_dirs)
    return dirs[best], float(np.sqrt(max(mse[best], 0.0))), resolution


def grid_circle_fit(points, n_cells=121):
    """Exhaustive in-plane center grid for the radial-deviation circle fit.

    The plane is re-derived here from scratch; for each candidate center
    the optimal radius is the mean distance. Returns (center_3d, radius,
    rmse, grid step).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, _, Vt = np.linalg.svd(centered)
    e1, normal = Vt[0], Vt[2]
    e2 = np.cross(normal, e1)
    q = np.column_stack([centered @ e1, centered @ e2])

    span = max(q[:, 0].ptp(), q[:, 1].ptp())
    half = 1.5 * max(span, 1e-6)
    axis_vals = np.linspace(-half, half, n_cells)
    cx, cy = np.meshgrid(axis_vals, axis_vals, indexing="ij")
    centers = np.column_stack([cx.ravel(), cy.ravel()])  # (G, 2)
    d = np.linalg.norm(q[None, :, :] - centers[:, None, :], axis=2)  # (G, n)
    r = d.mean(axis=1)
    sse = np.sum((d - r[:, None]) ** 2, axis=1)
    best = int(np.argmin(sse))
    step = axis_vals[1] - axis_vals[0]
    center3d = centroid + centers[best, 0] * e1 + centers[best, 1] * e2
    return center3d, float(r[best]), float(np.sqrt(sse[best] / q.shape[0])), float(step)
