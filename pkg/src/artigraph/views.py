"""Per-frame visibility scoring, top-k view selection, feature aggregation.

A frame's contribution to an object is the fraction of the object's points
that project in-bounds with positive depth and agree with the frame's depth
raster (disagreement beyond `depth_tol` implies occlusion). The best-seen
frames feed 2D detection and feature extraction; per-node semantic features
are the contribution-weighted average of per-view embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ZeroWeightSum
from .geometry import CameraIntrinsics, Pose, invert

DEFAULT_DEPTH_TOL = 0.03  # m; typical consumer-depth noise at 1-3 m range
DEFAULT_TOP_K = 5


@dataclass
class FrameRecord:
    """One posed observation: intrinsics, world<-cam pose, metric depth raster.

    Depth entries <= 0 or non-finite mark invalid pixels. `depth` may be
    None for sequences used only for marker tracking. `timestamp` is
    seconds; required by trajectory tracking.
    """

    frame_id: int
    intrinsics: CameraIntrinsics
    cam_pose: Pose
    depth: np.ndarray | None = None
    timestamp: float | None = None

    def __post_init__(self):
        if self.depth is not None:
            self.depth = np.asarray(self.depth, dtype=float)
            if self.depth.shape != (self.intrinsics.height, self.intrinsics.width):
                raise ValueError(
                    f"depth raster {self.depth.shape} does not match intrinsics "
                    f"({self.intrinsics.height}, {self.intrinsics.width})"
                )


@dataclass(frozen=True)
class ContributionScore:
    frame_id: int
    object_id: int
    score: float  # valid_points / total_points, in [0, 1]


def valid_projection_mask(points, frame: FrameRecord, depth_tol: float = DEFAULT_DEPTH_TOL):
    """Validity mask plus pixel coords (u, v) for world points in a frame."""
    world_to_cam = invert(frame.cam_pose)
    valid, u, v, _ = _kernels.projection_validity(
        points,
        world_to_cam.rotation_matrix,
        world_to_cam.position,
        frame.intrinsics,
        depth=frame.depth,
        depth_tol=depth_tol,
    )
    return valid, u, v


def frame_contribution(
    object_points, frame: FrameRecord, object_id: int = -1, depth_tol: float = DEFAULT_DEPTH_TOL
) -> ContributionScore:
    """Fraction of an object's points validly visible in a frame."""
    pts = np.asarray(object_points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("object_points must be non-empty")
    if depth_tol <= 0:
        raise ValueError("depth_tol must be positive")
    valid, _, _ = valid_projection_mask(pts, frame, depth_tol)
    return ContributionScore(
        frame_id=frame.frame_id, object_id=object_id, score=float(valid.sum()) / pts.shape[0]
    )


def select_top_k(scores, k: int) -> list[int]:
    """Frame ids of the k highest contribution scores, descending.

    Ties break by ascending frame id; zero-score frames are never selected,
    so fewer than k ids come back when fewer frames see the object.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(
        (s for s in scores if s.score > 0.0), key=lambda s: (-s.score, s.frame_id)
    )
    return [s.frame_id for s in ranked[:k]]


def aggregate_features(features, scores) -> np.ndarray:
    """Weighted average of unit feature vectors, renormalized to unit norm."""
    feats = np.asarray(features, dtype=float)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError("features must be a non-empty (n, d) array")
    w = np.asarray(scores, dtype=float).reshape(-1)
    if w.shape[0] != feats.shape[0]:
        raise ValueError("features and scores length mismatch")
    if np.any(w < 0):
        raise ValueError("weights must be >= 0")
    total = float(w.sum())
    if total <= 0.0:
        raise ZeroWeightSum("feature weights sum to zero")
    merged = w @ feats
    norm = np.linalg.norm(merged)
    if norm == 0.0:
        raise ZeroWeightSum("weighted feature sum cancelled to the zero vector")
    return merged / norm
