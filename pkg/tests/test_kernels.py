"""Compiled-vs-fallback parity and agreement with the brute-force oracle."""

import numpy as np
import pytest

from artigraph._kernels import IMPLEMENTATION, fallback
from artigraph._kernels import dbscan_labels, projection_validity
from artigraph.geometry import CameraIntrinsics, Pose, invert
from reference import dbscan_reference

try:
    from artigraph._kernels import _core
except ImportError:
    _core = None

K = CameraIntrinsics(fx=300.0, fy=300.0, cx=160.0, cy=120.0, width=320, height=240)


def random_cloud(rng, n):
    kind = rng.integers(0, 3)
    if kind == 0:
        return rng.uniform(-1, 1, size=(n, 3))
    if kind == 1:  # a few blobs plus scatter
        blobs = [rng.normal(rng.uniform(-1, 1, 3), 0.02, size=(n // 3, 3)) for _ in range(2)]
        return np.vstack(blobs + [rng.uniform(-1, 1, size=(n - 2 * (n // 3), 3))])
    return np.round(rng.uniform(-0.2, 0.2, size=(n, 3)), 1)  # heavy ties


def test_dbscan_matches_reference(rng):
    for _ in range(30):
        n = int(rng.integers(0, 200))
        pts = random_cloud(rng, n) if n else np.empty((0, 3))
        eps = float(rng.uniform(0.03, 0.3))
        min_pts = int(rng.integers(1, 8))
        got = dbscan_labels(pts, eps, min_pts)
        want = dbscan_reference(pts, eps, min_pts)
        assert np.array_equal(got, want)


@pytest.mark.skipif(_core is None, reason="compiled kernels not built")
def test_dbscan_backend_parity(rng):
    for _ in range(20):
        n = int(rng.integers(1, 300))
        pts = np.ascontiguousarray(random_cloud(rng, n))
        eps = float(rng.uniform(0.03, 0.3))
        min_pts = int(rng.integers(1, 8))
        a = _core.dbscan_labels(pts, eps, min_pts)
        b = fallback.dbscan_labels(pts, eps, min_pts)
        assert np.array_equal(a, b)


@pytest.mark.skipif(_core is None, reason="compiled kernels not built")
def test_projection_backend_parity(rng):
    from conftest import random_pose

    for _ in range(20):
        pts = np.ascontiguousarray(rng.normal(0, 1.0, size=(200, 3)))
        cam = random_pose(rng)
        w2c = invert(cam)
        rot = np.ascontiguousarray(w2c.rotation_matrix)
        t = np.ascontiguousarray(w2c.position)
        depth = None
        if rng.random() < 0.7:
            depth = np.ascontiguousarray(rng.uniform(-0.5, 3.0, size=(K.height, K.width)))
        args = (pts, rot, t, K.fx, K.fy, K.cx, K.cy, K.width, K.height, depth, 0.05)
        va, ua, vva, za = _core.projection_validity(*args)
        vb, ub, vvb, zb = fallback.projection_validity(*args)
        assert np.array_equal(va, vb)
        assert np.allclose(za, zb)
        both = (za > 0)
        assert np.allclose(ua[both], ub[both])
        assert np.allclose(vva[both], vvb[both])
        assert np.all(np.isnan(ua[~both])) and np.all(np.isnan(ub[~both]))


def test_projection_validity_depth_rule():
    # one point in front of the raster surface by more than the tolerance
    pts = np.array([[0.0, 0.0, 1.0], [0.1, 0.0, 1.0], [0.0, 0.0, -1.0]])
    depth = np.full((K.height, K.width), 1.0)
    depth[120, 190] = 0.5  # occluder at the second point's pixel
    valid, u, v, z = projection_validity(pts, np.eye(3), np.zeros(3), K, depth, 0.05)
    assert valid.tolist() == [True, False, False]
    assert u[0] == pytest.approx(K.cx) and v[0] == pytest.approx(K.cy)
    assert np.isnan(u[2])


def test_selected_backend_reported():
    assert IMPLEMENTATION in ("compiled", "python")
