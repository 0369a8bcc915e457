import numpy as np
import pytest

from artigraph.errors import AllNoise, NoVisiblePoints
from artigraph.geometry import CameraIntrinsics, Pose
from artigraph.lifting import (
    ClusterParams,
    ElementMask,
    backproject_mask,
    crop_rect,
    dbscan,
    denoise_largest,
    lift_masks,
)
from artigraph.views import FrameRecord
from reference import dbscan_reference


def test_dbscan_two_blobs(rng):
    a = rng.normal([0, 0, 0], 0.01, size=(20, 3))
    b = rng.normal([1, 0, 0], 0.01, size=(20, 3))
    pts = np.vstack([a, b])
    labels = dbscan(pts, ClusterParams(eps=0.05, min_pts=5))
    assert np.array_equal(labels, dbscan_reference(pts, 0.05, 5))
    assert set(labels) == {0, 1}
    assert (labels == -1).sum() == 0
    assert len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1


def test_dbscan_isolated_point():
    labels = dbscan(np.array([[0.0, 0.0, 0.0]]), ClusterParams(eps=0.1, min_pts=2))
    assert labels.tolist() == [-1]


def test_dbscan_identical_points():
    pts = np.zeros((7, 3))
    labels = dbscan(pts, ClusterParams(eps=0.01, min_pts=5))
    assert set(labels) == {0}


def test_denoise_largest(rng):
    blob = rng.normal([0, 0, 0], 0.01, size=(50, 3))
    outliers = np.array([[5, 5, 5], [6, 6, 6], [-7, 2, 1]], dtype=float)
    pts = np.vstack([blob, outliers])
    kept = denoise_largest(pts, ClusterParams(eps=0.05, min_pts=5))
    assert kept.shape == (50, 3)
    assert np.allclose(sorted(map(tuple, kept)), sorted(map(tuple, blob)))

    clean = denoise_largest(blob, ClusterParams(eps=0.05, min_pts=5))
    assert clean.shape == blob.shape

    with pytest.raises(AllNoise):
        denoise_largest(np.array([[0, 0, 0], [9, 9, 9.0]]), ClusterParams(eps=0.1, min_pts=5))


K = CameraIntrinsics(fx=100.0, fy=100.0, cx=0.0, cy=0.0, width=1000, height=1000)


def test_crop_rect_expansion():
    # projections span (100,100)-(200,200): points at z=1 from (1,1) to (2,2)
    pts = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 1.0], [1.5, 1.2, 1.0]])
    frame = FrameRecord(frame_id=0, intrinsics=K, cam_pose=Pose.identity())
    assert crop_rect(pts, frame, expansion=0.2) == (80.0, 80.0, 220.0, 220.0)
    assert crop_rect(pts, frame, expansion=0.0) == (100.0, 100.0, 200.0, 200.0)


def test_crop_rect_clamped():
    pts = np.array([[0.1, 0.1, 1.0], [9.5, 9.5, 1.0]])
    frame = FrameRecord(frame_id=0, intrinsics=K, cam_pose=Pose.identity())
    x0, y0, x1, y1 = crop_rect(pts, frame, expansion=0.5)
    assert (x0, y0) == (0.0, 0.0)
    assert (x1, y1) == (999.0, 999.0)


def test_crop_rect_no_visible():
    pts = np.array([[0.0, 0.0, -1.0]])
    frame = FrameRecord(frame_id=0, intrinsics=K, cam_pose=Pose.identity())
    with pytest.raises(NoVisiblePoints):
        crop_rect(pts, frame)


KS = CameraIntrinsics(fx=200.0, fy=200.0, cx=32.0, cy=32.0, width=64, height=64)
PARAMS = ClusterParams(eps=0.02, min_pts=4)


def handle_scene():
    """A 5 cm handle on a wall plane at z=1, seen from two cameras."""
    cams = [
        Pose.identity(),
        Pose.from_translation(0.08, 0.0, 0.0),
    ]
    frames = {}
    masks = []
    handle_pts = []
    for fid, cam in enumerate(cams):
        raster = np.full((KS.height, KS.width), 0.0)
        mask = np.zeros((KS.height, KS.width), dtype=bool)
        for v in range(KS.height):
            for u in range(KS.width):
                # wall plane z=1 everywhere in front of this camera
                raster[v, u] = 1.0
        frames[fid] = FrameRecord(frame_id=fid, intrinsics=KS, cam_pose=cam, depth=raster)
        # mask pixels whose back-projection lands inside the handle box
        for v in range(KS.height):
            for u in range(KS.width):
                x = (u - KS.cx) / KS.fx + cam.position[0]
                y = (v - KS.cy) / KS.fy + cam.position[1]
                if 0.00 <= x <= 0.05 and 0.00 <= y <= 0.02:
                    mask[v, u] = True
        masks.append(ElementMask(frame_id=fid, object_id=0, label="handle", mask=mask))
        handle_pts.append(backproject_mask(masks[-1], frames[fid]))
    return frames, masks, np.vstack(handle_pts)


def test_lift_masks_two_views():
    frames, masks, merged_gt = handle_scene()
    result = lift_masks(masks, frames, params=PARAMS)
    assert result.n_dropped == 0
    assert len(result.elements) == 1
    el = result.elements[0]
    assert (el.object_id, el.label) == (0, "handle")
    true_centroid = np.array([0.025, 0.01, 1.0])
    assert np.linalg.norm(el.centroid - true_centroid) < 0.01


def test_lift_masks_view_order_invariant():
    frames, masks, _ = handle_scene()
    a = lift_masks(masks, frames, params=PARAMS)
    b = lift_masks(masks[::-1], frames, params=PARAMS)
    assert np.allclose(a.elements[0].points, b.elements[0].points)


def test_lift_masks_single_view_equals_backprojection():
    frames, masks, _ = handle_scene()
    result = lift_masks(masks[:1], frames, params=PARAMS)
    direct = denoise_largest(backproject_mask(masks[0], frames[0]), PARAMS)
    assert np.allclose(result.elements[0].points, direct)


def test_lift_masks_invalid_depth_dropped():
    frames, masks, _ = handle_scene()
    dead = np.zeros((KS.height, KS.width))
    frames2 = {0: FrameRecord(frame_id=0, intrinsics=KS, cam_pose=Pose.identity(), depth=dead)}
    result = lift_masks(masks[:1], frames2, params=PARAMS)
    assert result.elements == []
    assert result.n_dropped == 1


def test_lift_masks_low_confidence_dropped():
    frames, masks, _ = handle_scene()
    weak = [
        ElementMask(frame_id=m.frame_id, object_id=m.object_id, label=m.label,
                    mask=m.mask, detection_score=0.1)
        for m in masks
    ]
    result = lift_masks(weak, frames, params=PARAMS, min_detection_score=0.3)
    assert result.elements == [] and result.n_dropped == 1


def test_lift_masks_splits_distant_same_label(rng):
    # two 'handle' blobs 0.5 m apart under one (object, label) group
    frames, _, _ = handle_scene()
    pts_a = rng.normal([0.0, 0.0, 1.0], 0.005, size=(40, 3))
    pts_b = rng.normal([0.5, 0.0, 1.0], 0.005, size=(40, 3))

    # single view whose mask covers both blobs via a synthetic depth raster
    from artigraph.bench import render_depth_raster

    cam = Pose.from_translation(0.25, 0.0, 0.0)
    K2 = CameraIntrinsics(fx=60.0, fy=60.0, cx=32.0, cy=32.0, width=64, height=64)
    raster = render_depth_raster(np.vstack([pts_a, pts_b]), cam, K2)
    frame = FrameRecord(frame_id=0, intrinsics=K2, cam_pose=cam, depth=raster)
    mask = raster > 0
    result = lift_masks(
        [ElementMask(frame_id=0, object_id=0, label="handle", mask=mask)],
        {0: frame},
        params=ClusterParams(eps=0.05, min_pts=3),
        split_eps=0.15,
    )
    assert len(result.elements) == 2
    centroids = sorted(float(e.centroid[0]) for e in result.elements)
    assert abs(centroids[0] - 0.0) < 0.05 and abs(centroids[1] - 0.5) < 0.05


def test_dbscan_reference_agreement_random(rng):
    for _ in range(20):
        n = int(rng.integers(2, 150))
        pts = rng.uniform(-0.5, 0.5, size=(n, 3))
        eps = float(rng.uniform(0.05, 0.4))
        mp = int(rng.integers(1, 6))
        assert np.array_equal(dbscan(pts, ClusterParams(eps, mp)), dbscan_reference(pts, eps, mp))
