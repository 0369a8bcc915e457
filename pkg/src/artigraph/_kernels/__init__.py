"""Kernel selection: compiled extension when built, NumPy fallback otherwise.

Set ARTIGRAPH_PURE=1 to force the fallback (used by the benchmark and when
debugging). The selected backend name is exposed as IMPLEMENTATION.
"""

import os

import numpy as np

if os.environ.get("ARTIGRAPH_PURE"):
    from . import fallback as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import fallback as _impl

IMPLEMENTATION: str = _impl.IMPLEMENTATION


def dbscan_labels(points, eps: float, min_pts: int) -> np.ndarray:
    """Cluster labels for a point cloud; -1 marks noise."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    return _impl.dbscan_labels(pts, float(eps), int(min_pts))


def projection_validity(points, rot_cw, t_cw, intr, depth=None, depth_tol=0.03):
    """Validity mask + pixel coords + depths for world points in one frame.

    `intr` is a CameraIntrinsics; `rot_cw`/`t_cw` map world into the camera
    frame. Returns (valid bool array, u, v, z).
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    rot = np.ascontiguousarray(rot_cw, dtype=np.float64)
    t = np.ascontiguousarray(t_cw, dtype=np.float64).reshape(3)
    d = None if depth is None else np.ascontiguousarray(depth, dtype=np.float64)
    valid, u, v, z = _impl.projection_validity(
        pts, rot, t, intr.fx, intr.fy, intr.cx, intr.cy,
        int(intr.width), int(intr.height), d, float(depth_tol),
    )
    return valid.astype(bool), u, v, z
