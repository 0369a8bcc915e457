"""Synthetic oracle and evaluation metrics.

Generates analytic articulated demonstrations (tip motion, marker-sphere
detections under configurable camera paths, pixel noise, and dropout) in
exactly the formats the tracking pipeline ingests, plus the metric set:
trajectory RMSE, axis angular/position error, detection P/R/F1, and
recall@k. Noise and dropout draws depend only on (frame, marker), so two
camera paths under the same seed see the same pixel-space realization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig, JointTypeMismatch, LengthMismatch
from .geometry import (
    CameraIntrinsics,
    Pose,
    compose,
    invert,
    quat_from_axis_angle,
    quat_mul,
)
from .graph import ArticulationAxis, JointType, SceneGraph
from .tracking import FilterConfig, MarkerDetection, SphereModel, TrackResult, track
from .views import FrameRecord

DEFAULT_INTRINSICS = CameraIntrinsics(fx=525.0, fy=525.0, cx=319.5, cy=239.5, width=640, height=480)


def make_marker_sphere(
    n_markers: int = 26,
    radius: float = 0.04,
    marker_size: float = 0.02,
    tip_offset: Pose | None = None,
) -> SphereModel:
    """Synthetic marker polyhedron: square markers tangent to a sphere at
    Fibonacci-distributed directions, corners wound counterclockwise seen
    from outside."""
    if tip_offset is None:
        tip_offset = Pose.from_translation(0.0, 0.0, -0.12)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    markers = {}
    half = marker_size / 2.0
    for i in range(n_markers):
        zf = 1.0 - 2.0 * (i + 0.5) / n_markers
        rho = np.sqrt(1.0 - zf * zf)
        d = np.array([rho * np.cos(golden * i), rho * np.sin(golden * i), zf])
        a = np.cross(d, [0.0, 0.0, 1.0])
        if np.linalg.norm(a) < 1e-8:
            a = np.cross(d, [0.0, 1.0, 0.0])
        a /= np.linalg.norm(a)
        b = np.cross(d, a)  # a x b = d, so the winding below faces outward
        center = radius * d
        markers[i] = np.array(
            [center - half * a - half * b, center + half * a - half * b,
             center + half * a + half * b, center - half * a + half * b]
        )
    return SphereModel(markers=markers, tip_offset=tip_offset)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """world<-cam pose with +z (optical axis) pointing from eye to target."""
    eye = np.asarray(eye, dtype=float)
    f = np.asarray(target, dtype=float) - eye
    f = f / np.linalg.norm(f)
    up = np.asarray(up, dtype=float)
    r = np.cross(f, up)
    if np.linalg.norm(r) < 1e-8:
        r = np.cross(f, [0.0, 1.0, 0.0])
    r = r / np.linalg.norm(r)
    dwn = np.cross(f, r)
    return Pose.from_rotation_matrix(np.column_stack([r, dwn, f]), position=eye)


def static_camera(pose: Pose, n_frames: int) -> list[Pose]:
    return [pose] * n_frames


def orbit_camera(target, orbit_radius: float, height: float, n_frames: int,
                 start_angle: float = 0.0, span: float = np.pi / 2) -> list[Pose]:
    """Camera circling the target at fixed radius, always looking at it."""
    target = np.asarray(target, dtype=float)
    poses = []
    for i in range(n_frames):
        ang = start_angle + span * (i / max(n_frames - 1, 1))
        eye = target + np.array(
            [orbit_radius * np.cos(ang), orbit_radius * np.sin(ang), height]
        )
        poses.append(look_at(eye, target))
    return poses


@dataclass
class MotionProfile:
    duration: float  # s
    magnitude: float  # travel (m) or sweep (rad)
    radius: float = 0.0  # handle distance from the hinge; revolute only
    profile: str = "ease"  # "ease" (sinusoidal start/stop) or "constant"

    def position_fraction(self, t: float) -> float:
        s = min(max(t / self.duration, 0.0), 1.0)
        if self.profile == "constant":
            return s
        return 0.5 * (1.0 - np.cos(np.pi * s))


@dataclass
class ScenarioConfig:
    joint_type: JointType
    axis: ArticulationAxis  # ground truth; range is overwritten by the motion magnitude
    motion: MotionProfile
    camera_path: list[Pose]
    pixel_noise_sigma: float = 0.0
    dropout_rate: float = 0.0
    frame_rate: float = 30.0
    seed: int = 0
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    name: str = ""

    def validate(self):
        m = self.motion
        if self.pixel_noise_sigma < 0 or not 0.0 <= self.dropout_rate <= 1.0:
            raise InvalidConfig("noise sigma must be >= 0 and dropout in [0, 1]")
        if self.frame_rate <= 0 or m.duration <= 0 or m.magnitude <= 0:
            raise InvalidConfig("frame_rate, duration, and magnitude must be positive")
        if self.joint_type == JointType.REVOLUTE:
            if m.radius <= 0:
                raise InvalidConfig("revolute scenarios need a positive handle radius")
            if m.magnitude > 2 * np.pi:
                raise InvalidConfig("sweep cannot exceed a full turn")
        if m.profile not in ("ease", "constant"):
            raise InvalidConfig(f"unknown motion profile {m.profile!r}")
        if len(self.camera_path) == 0:
            raise InvalidConfig("camera path is empty")

    @property
    def n_frames(self) -> int:
        return int(round(self.motion.duration * self.frame_rate)) + 1


@dataclass
class SyntheticDemo:
    gt_trajectory: list  # (timestamp, Pose world<-tip)
    gt_axis: ArticulationAxis
    frames: dict[int, FrameRecord]
    detections: list[MarkerDetection]


def _axis_basis(direction: np.ndarray):
    d = direction / np.linalg.norm(direction)
    e1 = np.cross(d, [0.0, 0.0, 1.0])
    if np.linalg.norm(e1) < 1e-8:
        e1 = np.cross(d, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(d, e1)


def tip_pose_at(config: ScenarioConfig, t: float) -> Pose:
    """Analytic ground-truth tip pose at time t."""
    m = config.motion
    axis = config.axis
    s = m.position_fraction(t) * m.magnitude
    e1, e2 = _axis_basis(axis.direction)
    if config.joint_type == JointType.PRISMATIC:
        start = axis.center - 0.5 * m.magnitude * axis.direction
        base = Pose.from_rotation_matrix(np.column_stack([e1, e2, axis.direction]))
        return Pose(position=start + s * axis.direction, quaternion=base.quaternion)
    pos = axis.center + m.radius * (np.cos(s) * e1 + np.sin(s) * e2)
    base = Pose.from_rotation_matrix(np.column_stack([e1, e2, axis.direction]))
    q = quat_mul(quat_from_axis_angle(axis.direction, s), base.quaternion)
    return Pose(position=pos, quaternion=q)


def generate(config: ScenarioConfig, sphere: SphereModel) -> SyntheticDemo:
    """Render a demonstration: exact corner projections plus i.i.d. pixel
    noise; markers facing away or outside the frustum are omitted.
    Deterministic given the seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_frames
    cam_path = config.camera_path
    if len(cam_path) == 1:
        cam_path = cam_path * n
    if len(cam_path) != n:
        raise InvalidConfig(f"camera path length {len(cam_path)} != frame count {n}")

    marker_ids = sorted(sphere.markers)
    n_mark = len(marker_ids)
    normals_s = np.array([sphere.marker_normal(m) for m in marker_ids])  # (M, 3)
    corners_s = np.array([sphere.markers[m] for m in marker_ids])  # (M, 4, 3)
    intr = config.intrinsics
    sphere_from_tip_inv = invert(sphere.tip_offset)

    gt, frames, detections = [], {}, []
    for i in range(n):
        t = i / config.frame_rate
        tip = tip_pose_at(config, t)
        gt.append((t, tip))
        sphere_pose = compose(tip, sphere_from_tip_inv)
        cam = cam_path[i]
        frames[i] = FrameRecord(
            frame_id=i, intrinsics=intr, cam_pose=cam, depth=None, timestamp=t
        )
        R_s = sphere_pose.rotation_matrix
        corners_w = corners_s @ R_s.T + sphere_pose.position  # (M, 4, 3)
        normals_w = normals_s @ R_s.T
        view = corners_w.mean(axis=1) - cam.position
        facing = np.sum(normals_w * view, axis=1) < 0.0  # back-face cull

        w2c = invert(cam)
        p_cam = corners_w @ w2c.rotation_matrix.T + w2c.position  # (M, 4, 3)
        z = p_cam[:, :, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = intr.fx * p_cam[:, :, 0] / z + intr.cx
            v = intr.fy * p_cam[:, :, 1] / z + intr.cy
        in_frustum = np.all(
            (z > 0) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height), axis=1
        )

        # draws depend only on (frame, marker): same realization for any camera path
        noise = rng.normal(0.0, 1.0, size=(n_mark, 4, 2))
        drop = rng.random(n_mark)
        visible = facing & in_frustum & (drop >= config.dropout_rate)
        for j in np.nonzero(visible)[0]:
            pix = np.stack([u[j], v[j]], axis=1) + config.pixel_noise_sigma * noise[j]
            detections.append(MarkerDetection(frame_id=i, marker_id=marker_ids[j], corners=pix))

    gt_axis = replace(config.axis, range=config.motion.magnitude)
    return SyntheticDemo(gt_trajectory=gt, gt_axis=gt_axis, frames=frames, detections=detections)


def render_depth_raster(points, cam_pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Min-depth point splatting; unseen pixels stay 0 (invalid)."""
    from . import _kernels

    w2c = invert(cam_pose)
    valid, u, v, z = _kernels.projection_validity(
        np.asarray(points, dtype=float).reshape(-1, 3),
        w2c.rotation_matrix, w2c.position, intr, depth=None, depth_tol=0.0,
    )
    raster = np.full((intr.height, intr.width), np.inf)
    iu = np.floor(u[valid] + 0.5).astype(int)
    iv = np.floor(v[valid] + 0.5).astype(int)
    np.minimum.at(raster, (iv, iu), z[valid])
    raster[~np.isfinite(raster)] = 0.0
    return raster


# -- metrics -----------------------------------------------------------------


def _is_timestamped(seq) -> bool:
    return len(seq) > 0 and isinstance(seq[0], tuple)


def align_by_timestamp(est, gt, max_dt: float | None = None):
    """Pair est samples with their nearest-gt-timestamp partner.

    Pairs farther apart than max_dt (default: half the median gt period)
    are excluded and counted. Returns (pairs, n_excluded).
    """
    gt_t = np.array([t for t, _ in gt])
    if max_dt is None:
        max_dt = 0.5 * float(np.median(np.diff(gt_t))) if len(gt_t) > 1 else np.inf
    pairs, excluded = [], 0
    for t, pose in est:
        j = int(np.argmin(np.abs(gt_t - t)))
        if abs(gt_t[j] - t) <= max_dt:
            pairs.append((pose, gt[j][1]))
        else:
            excluded += 1
    return pairs, excluded


def trajectory_rmse(est, gt) -> float:
    """Root-mean-square Euclidean position error.

    Accepts plain pose lists (paired index-wise, lengths must match) or
    timestamped (t, Pose) lists (paired by nearest timestamp within half a
    frame period; unmatched samples are excluded).
    """
    est, gt = list(est), list(gt)
    if _is_timestamped(est) and _is_timestamped(gt):
        pairs, _ = align_by_timestamp(est, gt)
        if not pairs:
            raise LengthMismatch("no est/gt sample pairs after timestamp alignment")
    else:
        if len(est) != len(gt):
            raise LengthMismatch(f"length {len(est)} != {len(gt)} and no timestamps to align")
        if len(est) == 0:
            raise LengthMismatch("empty trajectories")
        pairs = list(zip(est, gt))
    err2 = [float(np.sum((a.position - b.position) ** 2)) for a, b in pairs]
    return float(np.sqrt(np.mean(err2)))


def axis_angular_error(est_dir, gt_dir) -> float:
    """Angle between axis lines in degrees; invariant to direction sign."""
    a = np.asarray(est_dir, dtype=float).reshape(3)
    b = np.asarray(gt_dir, dtype=float).reshape(3)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return float(np.degrees(np.arccos(min(abs(float(np.dot(a, b))), 1.0))))


def axis_position_error(est_axis: ArticulationAxis, gt_axis: ArticulationAxis) -> float:
    """Perpendicular distance from the estimated center to the ground-truth
    axis line; sliding either center along its own axis changes nothing."""
    if est_axis.joint_type != JointType.REVOLUTE or gt_axis.joint_type != JointType.REVOLUTE:
        raise JointTypeMismatch("axis position error is defined for revolute joints")
    delta = est_axis.center - gt_axis.center
    d = gt_axis.direction
    return float(np.linalg.norm(delta - np.dot(delta, d) * d))


def detection_prf(predicted_centroids, gt_centroids, match_dist: float = 0.10):
    """Greedy one-to-one matching by ascending centroid distance.

    Returns (precision, recall, f1); empty prediction or gt sets follow the
    0-by-convention rule, and two empty sets count as perfect.
    """
    if match_dist <= 0:
        raise ValueError("match_dist must be positive")
    pred = np.asarray(predicted_centroids, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt_centroids, dtype=float).reshape(-1, 3)
    n_pred, n_gt = pred.shape[0], gt.shape[0]
    matched = 0
    if n_pred and n_gt:
        dists = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=2)
        order = sorted(
            ((dists[i, j], i, j) for i in range(n_pred) for j in range(n_gt))
        )
        used_p, used_g = set(), set()
        for d, i, j in order:
            if d > match_dist:
                break
            if i in used_p or j in used_g:
                continue
            used_p.add(i)
            used_g.add(j)
            matched += 1
    precision = matched / n_pred if n_pred else (1.0 if n_gt == 0 else 0.0)
    recall = matched / n_gt if n_gt else (1.0 if n_pred == 0 else 0.0)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def recall_at_k(graph: SceneGraph, queries, k: int) -> float:
    """Fraction of (feature, gt node id) queries whose node ranks in top-k."""
    queries = list(queries)
    if not queries:
        raise ValueError("no queries given")
    hits = 0
    for feature, gt_id in queries:
        ids = [nid for nid, _ in graph.query(feature, k)]
        hits += gt_id in ids
    return hits / len(queries)


# -- scenario runner ----------------------------------------------------------


@dataclass
class ScenarioRun:
    name: str
    seed: int
    joint_correct: bool
    t_err: float  # m
    theta_err: float  # deg
    d_err: float | None  # m; revolute scenarios with a revolute verdict only
    n_frames_used: int
    error: str | None = None  # set when the run failed; metrics are NaN


def run_scenario(
    config: ScenarioConfig,
    sphere: SphereModel,
    filter_cfg: FilterConfig = FilterConfig(),
    lambda_penalty: float | None = None,
) -> ScenarioRun:
    """generate -> track -> select_joint -> metrics for one scenario."""
    from .articulation import select_joint

    demo = generate(config, sphere)
    try:
        result: TrackResult = track(demo.detections, demo.frames, sphere, filter_cfg)
    except Exception as e:  # per-scenario failures surface in the report
        return ScenarioRun(
            name=config.name, seed=config.seed, joint_correct=False,
            t_err=float("nan"), theta_err=float("nan"), d_err=None,
            n_frames_used=0, error=f"{type(e).__name__}: {e}",
        )
    verdict = select_joint([p.position for _, p in result.trajectory], lambda_penalty)
    t_err = trajectory_rmse(result.trajectory, demo.gt_trajectory)
    theta_err = axis_angular_error(verdict.axis.direction, demo.gt_axis.direction)
    d_err = None
    if verdict.joint_type == JointType.REVOLUTE and demo.gt_axis.joint_type == JointType.REVOLUTE:
        d_err = axis_position_error(verdict.axis, demo.gt_axis)
    return ScenarioRun(
        name=config.name, seed=config.seed,
        joint_correct=verdict.joint_type == demo.gt_axis.joint_type,
        t_err=t_err, theta_err=theta_err, d_err=d_err,
        n_frames_used=result.n_used,
    )
