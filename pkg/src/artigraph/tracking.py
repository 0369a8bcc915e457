"""World-frame 6-DoF tip trajectory from per-frame marker corner detections.

Pipeline per demonstration: PnP on the marker sphere (cam<-sphere), global
composition with the frame's camera pose (world<-sphere), adaptive Kalman
smoothing with rotation unwrapping, then the calibrated sphere<-tip offset
(world<-tip). Frames that fail PnP are skipped; the filter predicts across
the gap using elapsed time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InsufficientTrack,
    NoConvergence,
    NonMonotonicTimestamps,
    TooFewPoints,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    compose,
    matrix_to_quat,
    nearest_rotvec,
    quat_to_matrix,
    quat_to_rotvec,
    rotvec_to_quat,
)
from .views import FrameRecord

log = logging.getLogger(__name__)

MIN_PNP_POINTS = 4
GN_MAX_ITERS = 100
GN_STEP_TOL = 1e-10
MAX_NORMAL_COND = 1e12


@dataclass
class SphereModel:
    """Calibrated marker polyhedron: marker id -> four ordered corners
    (sphere frame, meters) plus the rigid sphere<-tip offset."""

    markers: dict[int, np.ndarray]
    tip_offset: Pose

    def __post_init__(self):
        self.markers = {int(k): np.asarray(v, dtype=float).reshape(4, 3) for k, v in self.markers.items()}
        if len(self.markers) < 6:
            raise ValueError(f"sphere model needs >= 6 markers, got {len(self.markers)}")
        centroid = np.mean([c.mean(axis=0) for c in self.markers.values()], axis=0)
        sign = 0.0
        for mid, corners in self.markers.items():
            centered = corners - corners.mean(axis=0)
            if np.linalg.svd(centered, compute_uv=False)[2] > 1e-6:
                raise ValueError(f"marker {mid} corners are not coplanar")
            n = np.cross(corners[1] - corners[0], corners[2] - corners[0])
            d = float(np.dot(n, corners.mean(axis=0) - centroid))
            if sign == 0.0:
                sign = np.sign(d)
            elif np.sign(d) != sign:
                raise ValueError(f"marker {mid} winding inconsistent with the rest of the model")
        self._normal_sign = sign if sign != 0.0 else 1.0

    def marker_normal(self, marker_id: int) -> np.ndarray:
        """Outward unit normal of a marker plane in the sphere frame."""
        corners = self.markers[marker_id]
        n = np.cross(corners[1] - corners[0], corners[2] - corners[0]) * self._normal_sign
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class MarkerDetection:
    frame_id: int
    marker_id: int
    corners: np.ndarray  # (4, 2) ordered pixel coordinates

    def __post_init__(self):
        object.__setattr__(self, "corners", np.asarray(self.corners, dtype=float).reshape(4, 2))


@dataclass(frozen=True)
class PnPResult:
    pose: Pose  # cam<-sphere
    reproj_rmse: float  # pixels, per-point RMS
    n_points: int


def _polar_rotation(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R


def _dlt_general(pts3d: np.ndarray, xn: np.ndarray):
    """12-parameter DLT on normalized image coords; needs non-planar points."""
    n = pts3d.shape[0]
    Xh = np.hstack([pts3d, np.ones((n, 1))])
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, 0:1] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -xn[:, 1:2] * Xh
    _, _, Vt = np.linalg.svd(A)
    P = Vt[-1].reshape(3, 4)

    best = None
    for sign in (1.0, -1.0):
        Ps = sign * P
        M = Ps[:, :3]
        svals = np.linalg.svd(M, compute_uv=False)
        scale = svals.mean()
        if scale <= 0 or not np.isfinite(scale):
            continue
        R = _polar_rotation(M)
        t = Ps[:, 3] / scale
        depths = pts3d @ R.T[:, 2] + t[2]
        n_front = int((depths > 0).sum())
        if best is None or n_front > best[0]:
            best = (n_front, R, t)
    if best is None or best[0] == 0:
        raise DegenerateConfiguration("DLT produced no solution with points in front")
    return best[1], best[2]


def _dlt_planar(pts3d: np.ndarray, xn: np.ndarray):
    """Homography-based initialization for coplanar 3D points."""
    c = pts3d.mean(axis=0)
    centered = pts3d - c
    _, _, Vt = np.linalg.svd(centered)
    basis = Vt[:2].T  # plane basis e1, e2 as columns
    w = centered @ basis  # (n, 2) plane coordinates

    n = w.shape[0]
    Wh = np.hstack([w, np.ones((n, 1))])
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = Wh
    A[0::2, 6:9] = -xn[:, 0:1] * Wh
    A[1::2, 3:6] = Wh
    A[1::2, 6:9] = -xn[:, 1:2] * Wh
    _, _, VtH = np.linalg.svd(A)
    H = VtH[-1].reshape(3, 3)

    for sign in (1.0, -1.0):
        Hs = sign * H
        h1, h2, h3 = Hs[:, 0], Hs[:, 1], Hs[:, 2]
        lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
        r1, r2, t = lam * h1, lam * h2, lam * h3
        Rp = _polar_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
        depths = w @ Rp.T[2, :2] + t[2]
        if np.mean(depths > 0) > 0.5:
            e3 = np.cross(basis[:, 0], basis[:, 1])
            B = np.column_stack([basis, e3])
            R = Rp @ B.T
            return R, t - R @ c
    raise DegenerateConfiguration("planar initialization left points behind the camera")


def solve_pnp(correspondences, k: CameraIntrinsics) -> PnPResult:
    """Pose cam<-sphere minimizing squared pixel reprojection error.

    Linear (DLT) initialization — homography form when the 3D points are
    coplanar — refined by damped Gauss-Newton with backtracking, so the
    reprojection RMSE never increases across iterations. Converges when
    the step norm drops below 1e-10 or after 100 iterations.
    """
    pts3d = np.asarray([c[0] for c in correspondences], dtype=float).reshape(-1, 3)
    pix = np.asarray([c[1] for c in correspondences], dtype=float).reshape(-1, 2)
    n = pts3d.shape[0]
    if n < MIN_PNP_POINTS:
        raise TooFewPoints(f"PnP needs >= {MIN_PNP_POINTS} correspondences, got {n}")

    svals = np.linalg.svd(pts3d - pts3d.mean(axis=0), compute_uv=False)
    if svals[1] <= 1e-9 * max(svals[0], 1e-12):
        raise DegenerateConfiguration("3D correspondences are collinear")

    xn = np.column_stack([(pix[:, 0] - k.cx) / k.fx, (pix[:, 1] - k.cy) / k.fy])
    planar = svals[2] <= 1e-6 * svals[0]
    R, t = _dlt_planar(pts3d, xn) if planar else _dlt_general(pts3d, xn)

    fxy = np.array([k.fx, k.fy])

    def residuals(R, t):
        p_cam = pts3d @ R.T + t
        z = p_cam[:, 2]
        uv = fxy * p_cam[:, :2] / z[:, None] + np.array([k.cx, k.cy])
        return (uv - pix).ravel(), p_cam

    def rmse_of(res):
        return float(np.sqrt(np.mean(np.sum(res.reshape(-1, 2) ** 2, axis=1))))

    res, p_cam = residuals(R, t)
    rmse = rmse_of(res)
    if not np.isfinite(rmse):
        raise NoConvergence("non-finite reprojection error at initialization")

    lam = 1e-6
    for it in range(GN_MAX_ITERS):
        x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
        # d(pixel)/d(p_cam), then chain through left-perturbation of R and t
        Jp = np.zeros((n, 2, 3))
        Jp[:, 0, 0] = k.fx / z
        Jp[:, 0, 2] = -k.fx * x / z**2
        Jp[:, 1, 1] = k.fy / z
        Jp[:, 1, 2] = -k.fy * y / z**2
        rot_pts = p_cam - t  # R @ X
        sk = np.zeros((n, 3, 3))
        sk[:, 0, 1] = -rot_pts[:, 2]
        sk[:, 0, 2] = rot_pts[:, 1]
        sk[:, 1, 0] = rot_pts[:, 2]
        sk[:, 1, 2] = -rot_pts[:, 0]
        sk[:, 2, 0] = -rot_pts[:, 1]
        sk[:, 2, 1] = rot_pts[:, 0]
        J = np.empty((2 * n, 6))
        J[:, 0:3] = (-Jp @ sk).reshape(2 * n, 3)
        J[:, 3:6] = Jp.reshape(2 * n, 3)

        JtJ = J.T @ J
        if it == 0 and np.linalg.cond(JtJ) > MAX_NORMAL_COND:
            raise DegenerateConfiguration(
                f"normal-equations condition number exceeds {MAX_NORMAL_COND:g}"
            )
        g = J.T @ res

        accepted = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(JtJ + lam * np.eye(6), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            R_new = quat_to_matrix(rotvec_to_quat(delta[:3])) @ R
            t_new = t + delta[3:]
            res_new, p_cam_new = residuals(R_new, t_new)
            rmse_new = rmse_of(res_new)
            if np.isfinite(rmse_new) and rmse_new <= rmse:
                R, t, res, p_cam, rmse = R_new, t_new, res_new, p_cam_new, rmse_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted or np.linalg.norm(delta) < GN_STEP_TOL:
            break

    if not np.isfinite(rmse):
        raise NoConvergence("reprojection error diverged")
    return PnPResult(
        pose=Pose(position=t, quaternion=matrix_to_quat(R)), reproj_rmse=rmse, n_points=n
    )


def to_world(pnp: PnPResult, cam_pose: Pose) -> Pose:
    """world<-sphere = (world<-cam) o (cam<-sphere)."""
    return compose(cam_pose, pnp.pose)


@dataclass
class FilterConfig:
    """Adaptive Kalman parameters.

    Measurement noise is scaled per sample as R0 * (1 + alpha * rmse^2),
    so high-reprojection frames are trusted less. Process noise follows a
    white-acceleration model sized for handheld manipulation speeds.
    """

    alpha: float = 1.0  # px^-2
    sigma_meas_pos: float = 2e-3  # m, baseline position measurement noise
    sigma_meas_rot: float = 5e-3  # rad
    sigma_acc: float = 0.5  # m/s^2
    sigma_ang_acc: float = 2.0  # rad/s^2
    rts_smoother: bool = False  # optional forward-backward pass


@dataclass
class FilterState:
    """Constant-velocity state over position and unwrapped rotation vector."""

    x: np.ndarray  # 12: [pos, vel, rotvec, ang_vel]
    P: np.ndarray  # 12x12 symmetric positive-definite

    @property
    def position(self):
        return self.x[0:3]

    @property
    def velocity(self):
        return self.x[3:6]

    @property
    def rotation(self):
        return self.x[6:9]

    @property
    def angular_velocity(self):
        return self.x[9:12]

    def pose(self) -> Pose:
        return Pose(position=self.x[0:3].copy(), quaternion=rotvec_to_quat(self.x[6:9]))


_H = np.zeros((6, 12))
_H[0:3, 0:3] = np.eye(3)
_H[3:6, 6:9] = np.eye(3)


def _transition(dt: float):
    F = np.eye(12)
    F[0:3, 3:6] = dt * np.eye(3)
    F[6:9, 9:12] = dt * np.eye(3)
    return F


def _process_noise(dt: float, cfg: FilterConfig):
    Q = np.zeros((12, 12))
    for offset, sig in ((0, cfg.sigma_acc), (6, cfg.sigma_ang_acc)):
        q = sig * sig
        for ax in range(3):
            p, v = offset + ax, offset + 3 + ax
            Q[p, p] = q * dt**4 / 4.0
            Q[p, v] = Q[v, p] = q * dt**3 / 2.0
            Q[v, v] = q * dt**2
    return Q


def filter_trajectory(samples, cfg: FilterConfig = FilterConfig()):
    """Smooth raw (timestamp, Pose, reproj_rmse) samples.

    Rotation measurements are unwrapped against the filter's running
    estimate before each update, keeping the state rotation vector
    continuous across the +/-pi boundary. The first output equals the
    first measurement. Returns a list of (timestamp, Pose).
    """
    samples = list(samples)
    if len(samples) == 0:
        raise ValueError("filter needs at least one sample")

    R0 = np.diag([cfg.sigma_meas_pos**2] * 3 + [cfg.sigma_meas_rot**2] * 3)
    t0, pose0, _ = samples[0]
    x = np.zeros(12)
    x[0:3] = pose0.position
    x[6:9] = quat_to_rotvec(pose0.quaternion)
    P = np.diag(
        [cfg.sigma_meas_pos**2] * 3 + [1.0] * 3 + [cfg.sigma_meas_rot**2] * 3 + [25.0] * 3
    )

    times = [t0]
    upd_x, upd_P = [x.copy()], [P.copy()]
    pred_x, pred_P, Fs = [x.copy()], [P.copy()], [np.eye(12)]

    prev_t = t0
    I = np.eye(12)
    for t, pose, rmse in samples[1:]:
        dt = t - prev_t
        if dt <= 0:
            raise NonMonotonicTimestamps(f"timestamp {t} does not increase past {prev_t}")
        prev_t = t
        F = _transition(dt)
        x_pred = F @ x
        P_pred = F @ P @ F.T + _process_noise(dt, cfg)

        z = np.concatenate([pose.position, nearest_rotvec(pose.quaternion, x_pred[6:9])])
        Rt = R0 * (1.0 + cfg.alpha * rmse * rmse)
        S = _H @ P_pred @ _H.T + Rt
        K = np.linalg.solve(S.T, (_H @ P_pred.T)).T
        x = x_pred + K @ (z - _H @ x_pred)
        IKH = I - K @ _H
        P = IKH @ P_pred @ IKH.T + K @ Rt @ K.T  # Joseph form keeps P symmetric PD
        P = 0.5 * (P + P.T)

        times.append(t)
        pred_x.append(x_pred)
        pred_P.append(P_pred)
        Fs.append(F)
        upd_x.append(x.copy())
        upd_P.append(P.copy())

    states = upd_x
    if cfg.rts_smoother and len(samples) > 1:
        states = [s.copy() for s in upd_x]
        for i in range(len(samples) - 2, -1, -1):
            C = upd_P[i] @ Fs[i + 1].T @ np.linalg.inv(pred_P[i + 1])
            states[i] = upd_x[i] + C @ (states[i + 1] - pred_x[i + 1])

    return [
        (t, Pose(position=s[0:3].copy(), quaternion=rotvec_to_quat(s[6:9])))
        for t, s in zip(times, states)
    ]


def apply_tip_offset(poses, model: SphereModel) -> list[Pose]:
    """world<-tip = (world<-sphere) o (sphere<-tip), elementwise."""
    return [compose(p, model.tip_offset) for p in poses]


@dataclass
class TrackResult:
    trajectory: list  # (timestamp, Pose world<-tip)
    n_frames: int  # frames with detections
    n_used: int  # frames that produced a pose
    n_skipped: int
    mean_reproj_rmse: float

    def poses(self) -> list[Pose]:
        return [p for _, p in self.trajectory]


def track(
    detections,
    frames: dict[int, FrameRecord],
    model: SphereModel,
    cfg: FilterConfig = FilterConfig(),
) -> TrackResult:
    """Full tip-trajectory recovery from marker detections.

    solve_pnp -> to_world -> filter_trajectory -> apply_tip_offset. Frames
    with fewer than 4 usable correspondences or failing PnP are skipped;
    the filter bridges the gaps by prediction over the elapsed time.
    """
    by_frame: dict[int, list[MarkerDetection]] = {}
    for det in detections:
        by_frame.setdefault(det.frame_id, []).append(det)

    samples = []
    n_skipped = 0
    warned: set[int] = set()
    for fid in sorted(by_frame):
        frame = frames.get(fid)
        if frame is None:
            raise KeyError(f"detections reference unknown frame {fid}")
        if frame.timestamp is None:
            raise ValueError(f"frame {fid} has no timestamp")
        corr = []
        for det in by_frame[fid]:
            corners3d = model.markers.get(det.marker_id)
            if corners3d is None:
                if det.marker_id not in warned:
                    log.warning("marker id %d not in sphere model; skipping", det.marker_id)
                    warned.add(det.marker_id)
                continue
            corr.extend(zip(corners3d, det.corners))
        if len(corr) < MIN_PNP_POINTS:
            n_skipped += 1
            continue
        try:
            pnp = solve_pnp(corr, frame.intrinsics)
        except (TooFewPoints, DegenerateConfiguration, NoConvergence):
            n_skipped += 1
            continue
        samples.append((frame.timestamp, to_world(pnp, frame.cam_pose), pnp.reproj_rmse))

    if len(samples) < 2:
        raise InsufficientTrack(
            f"only {len(samples)} of {len(by_frame)} detection frames produced a pose "
            f"({n_skipped} skipped)"
        )

    smoothed = filter_trajectory(samples, cfg)
    tip = apply_tip_offset([p for _, p in smoothed], model)
    return TrackResult(
        trajectory=list(zip([t for t, _ in smoothed], tip)),
        n_frames=len(by_frame),
        n_used=len(samples),
        n_skipped=n_skipped,
        mean_reproj_rmse=float(np.mean([s[2] for s in samples])),
    )
