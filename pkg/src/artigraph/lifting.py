"""Object denoising and multi-view lifting of 2D element masks into 3D.

Instance segments and per-frame element masks arrive as files (the 2D/3D
detectors themselves run upstream); this module turns them into clean
per-node point clouds: DBSCAN outlier removal for object bodies, and
mask back-projection merged across the selected views for elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import AllNoise, NoVisiblePoints
from .views import DEFAULT_DEPTH_TOL, FrameRecord, valid_projection_mask

# Element clusters are handle-scale, object denoising is furniture-scale.
DEFAULT_ELEMENT_CLUSTER = (0.02, 10)
DEFAULT_OBJECT_CLUSTER = (0.05, 20)
DEFAULT_CROP_EXPANSION = 0.2
DEFAULT_SPLIT_EPS = 0.15  # same-label groups further apart than this become separate nodes
DEFAULT_MIN_DETECTION_SCORE = 0.3


@dataclass(frozen=True)
class ClusterParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass
class InstanceSegment:
    instance_id: int
    label: str
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.points.shape[0] == 0:
            raise ValueError("instance segment must have points")


@dataclass
class ElementMask:
    """Binary 2D mask of one detected functional region in one frame."""

    frame_id: int
    object_id: int
    label: str
    mask: np.ndarray
    detection_score: float = 1.0

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if self.mask.ndim != 2:
            raise ValueError("mask must be 2-D")
        if not self.mask.any():
            raise ValueError("mask has no set pixels")
        if not 0.0 <= self.detection_score <= 1.0:
            raise ValueError("detection_score must be in [0, 1]")


def dbscan(points, params: ClusterParams) -> np.ndarray:
    """Cluster labels (-1 = noise) with deterministic border-point ties."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return _kernels.dbscan_labels(pts, params.eps, params.min_pts)


def denoise_largest(points, params: ClusterParams) -> np.ndarray:
    """Points of the most populous cluster; ties by lowest cluster label."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("points must be non-empty")
    labels = dbscan(pts, params)
    kept = labels[labels >= 0]
    if kept.size == 0:
        raise AllNoise("every point was classified as noise")
    counts = np.bincount(kept)
    best = int(np.argmax(counts))  # argmax takes the lowest label on ties
    return pts[labels == best]


def crop_rect(object_points, frame: FrameRecord, expansion: float = DEFAULT_CROP_EXPANSION):
    """Axis-aligned pixel bbox of the validly projected points.

    Grown by `expansion` of the bbox size per side and clamped to the
    image. Returns (x_min, y_min, x_max, y_max) as floats.
    """
    if expansion < 0:
        raise ValueError("expansion must be >= 0")
    pts = np.asarray(object_points, dtype=float).reshape(-1, 3)
    valid, u, v = valid_projection_mask(pts, frame)
    if not valid.any():
        raise NoVisiblePoints("no object point projects validly into the frame")
    us, vs = u[valid], v[valid]
    x0, x1 = float(us.min()), float(us.max())
    y0, y1 = float(vs.min()), float(vs.max())
    dx, dy = expansion * (x1 - x0), expansion * (y1 - y0)
    w, h = frame.intrinsics.width, frame.intrinsics.height
    return (
        max(0.0, x0 - dx),
        max(0.0, y0 - dy),
        min(float(w - 1), x1 + dx),
        min(float(h - 1), y1 + dy),
    )


@dataclass
class LiftedElement:
    object_id: int
    label: str
    points: np.ndarray
    centroid: np.ndarray = field(init=False)
    detection_score: float = 1.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.centroid = self.points.mean(axis=0)


@dataclass
class LiftResult:
    elements: list[LiftedElement]
    n_dropped: int  # groups whose merged cloud denoised to nothing or scored too low


def backproject_mask(mask: ElementMask, frame: FrameRecord) -> np.ndarray:
    """World points for a mask's set pixels with valid depth."""
    if frame.depth is None:
        raise ValueError(f"frame {frame.frame_id} has no depth raster")
    if mask.mask.shape != frame.depth.shape:
        raise ValueError("mask dimensions do not match the frame")
    vs, us = np.nonzero(mask.mask)
    d = frame.depth[vs, us]
    ok = np.isfinite(d) & (d > 0.0)
    if not ok.any():
        return np.empty((0, 3))
    us, vs, d = us[ok], vs[ok], d[ok]
    k = frame.intrinsics
    p_cam = np.stack(
        [(us - k.cx) * d / k.fx, (vs - k.cy) * d / k.fy, d], axis=1
    )
    return frame.cam_pose.apply(p_cam)


def lift_masks(
    masks,
    frames: dict[int, FrameRecord],
    params: ClusterParams = ClusterParams(*DEFAULT_ELEMENT_CLUSTER),
    split_eps: float = DEFAULT_SPLIT_EPS,
    min_detection_score: float = DEFAULT_MIN_DETECTION_SCORE,
) -> LiftResult:
    """Merge masks across views into denoised per-element point clouds.

    Masks are grouped by (object_id, label); each group's set pixels are
    back-projected into world space, concatenated over views, and denoised.
    A group whose cloud splits into spatially distant clusters (second
    DBSCAN pass at `split_eps`) yields one element per cluster. Groups
    whose merged cloud is all noise, or whose best detection score falls
    below `min_detection_score`, are dropped and counted.
    """
    groups: dict[tuple[int, str], list[ElementMask]] = {}
    for m in masks:
        groups.setdefault((m.object_id, m.label), []).append(m)

    elements: list[LiftedElement] = []
    dropped = 0
    for (object_id, label), group in sorted(groups.items()):
        score = max(m.detection_score for m in group)
        if score < min_detection_score:
            dropped += 1
            continue
        clouds = []
        for m in sorted(group, key=lambda m: m.frame_id):
            if m.frame_id not in frames:
                raise KeyError(f"mask references unknown frame {m.frame_id}")
            clouds.append(backproject_mask(m, frames[m.frame_id]))
        merged = np.concatenate(clouds, axis=0) if clouds else np.empty((0, 3))
        if merged.shape[0] == 0:
            dropped += 1
            continue
        try:
            clean = denoise_largest(merged, params)
        except AllNoise:
            dropped += 1
            continue
        # split same-label detections that are actually distinct parts
        split_labels = _kernels.dbscan_labels(clean, split_eps, params.min_pts)
        kept = split_labels[split_labels >= 0]
        if kept.size == 0 or len(np.unique(kept)) <= 1:
            elements.append(
                LiftedElement(object_id=object_id, label=label, points=clean, detection_score=score)
            )
        else:
            for lab in np.unique(kept):
                elements.append(
                    LiftedElement(
                        object_id=object_id,
                        label=label,
                        points=clean[split_labels == lab],
                        detection_score=score,
                    )
                )
    return LiftResult(elements=elements, n_dropped=dropped)
