import numpy as np
import pytest

from artigraph.bench import render_depth_raster
from artigraph.errors import ZeroWeightSum
from artigraph.geometry import CameraIntrinsics, Pose
from artigraph.views import (
    ContributionScore,
    FrameRecord,
    aggregate_features,
    frame_contribution,
    select_top_k,
)

K = CameraIntrinsics(fx=200.0, fy=200.0, cx=32.0, cy=32.0, width=64, height=64)


def grid_points(z=2.0, n=10):
    xs = np.linspace(-0.05, 0.05, n)
    return np.array([[x, 0.0, z] for x in xs])


def frame_with(depth, fid=0):
    return FrameRecord(frame_id=fid, intrinsics=K, cam_pose=Pose.identity(), depth=depth)


def test_contribution_full_visibility():
    pts = grid_points()
    raster = render_depth_raster(pts, Pose.identity(), K)
    score = frame_contribution(pts, frame_with(raster), object_id=3)
    assert score == ContributionScore(frame_id=0, object_id=3, score=1.0)


def test_contribution_facing_away():
    pts = grid_points(z=-2.0)
    raster = np.full((K.height, K.width), 1.0)
    assert frame_contribution(pts, frame_with(raster)).score == 0.0


def test_contribution_with_occluder():
    # 10 points at z=2; a closer surface at 4 of their pixels implies occlusion
    pts = grid_points(z=2.0, n=10)
    raster = render_depth_raster(pts, Pose.identity(), K)
    u = np.floor(200.0 * pts[:, 0] / 2.0 + 32.0 + 0.5).astype(int)
    v = np.floor(200.0 * pts[:, 1] / 2.0 + 32.0 + 0.5).astype(int)
    assert len(set(zip(u, v))) == 10  # distinct pixels, count by hand
    for i in range(4):
        raster[v[i], u[i]] = 1.0
    score = frame_contribution(pts, frame_with(raster), depth_tol=0.03)
    assert score.score == pytest.approx(0.6)


def test_contribution_monotone_in_occluder(rng):
    pts = grid_points(z=2.0, n=10)
    raster = render_depth_raster(pts, Pose.identity(), K)
    occluded = raster.copy()
    u = np.floor(200.0 * pts[:, 0] / 2.0 + 32.0 + 0.5).astype(int)
    v = np.floor(200.0 * pts[:, 1] / 2.0 + 32.0 + 0.5).astype(int)
    prev = frame_contribution(pts, frame_with(raster)).score
    for i in rng.permutation(10):
        occluded[v[i], u[i]] = 0.5
    score_all = frame_contribution(pts, frame_with(occluded)).score
    # removing occlusions one by one never decreases the score
    for i in range(10):
        occluded[v[i], u[i]] = raster[v[i], u[i]]
        s = frame_contribution(pts, frame_with(occluded)).score
        assert s >= score_all
        score_all = s
    assert score_all == prev


def test_select_top_k_ties_and_zero():
    scores = [
        ContributionScore(7, 0, 0.9),
        ContributionScore(3, 0, 0.2),
        ContributionScore(5, 0, 0.9),
    ]
    assert select_top_k(scores, 2) == [5, 7]
    assert select_top_k(scores, 10) == [5, 7, 3]
    zeros = [ContributionScore(i, 0, 0.0) for i in range(4)]
    assert select_top_k(zeros, 3) == []
    mixed = scores + zeros
    assert select_top_k(mixed, 10) == [5, 7, 3]


def test_select_top_k_permutation_invariant(rng):
    scores = [ContributionScore(int(i), 0, float(s)) for i, s in
              zip(rng.permutation(20), rng.random(20).round(1))]
    want = select_top_k(scores, 5)
    for _ in range(5):
        shuffled = [scores[i] for i in rng.permutation(len(scores))]
        assert select_top_k(shuffled, 5) == want


def test_aggregate_single_and_identical():
    f = np.array([0.6, 0.8])
    assert np.allclose(aggregate_features([f], [2.0]), f)
    assert np.allclose(aggregate_features([f, f], [0.3, 3.0]), f)


def test_aggregate_weighted_value():
    f1, f2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    out = aggregate_features([f1, f2], [3.0, 1.0])
    assert np.allclose(out, [0.9487, 0.3162], atol=1e-4)  # normalize(3, 1)
    assert np.linalg.norm(out) == pytest.approx(1.0)


def test_aggregate_scale_invariant(rng):
    feats = rng.normal(size=(5, 8))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    w = rng.random(5) + 0.1
    a = aggregate_features(feats, w)
    b = aggregate_features(feats, 37.5 * w)
    assert np.allclose(a, b)


def test_aggregate_zero_weights():
    with pytest.raises(ZeroWeightSum):
        aggregate_features([[1.0, 0.0]], [0.0])
    with pytest.raises(ZeroWeightSum):
        aggregate_features([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0])


def test_frame_record_dimension_check():
    with pytest.raises(ValueError):
        FrameRecord(frame_id=0, intrinsics=K, cam_pose=Pose.identity(), depth=np.zeros((3, 3)))
