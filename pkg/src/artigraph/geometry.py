"""Rigid-body transforms, pinhole projection, and rotation-sequence utilities.

Conventions used repo-wide:

* Quaternions are scalar-last ``[x, y, z, w]`` and stored with ``w >= 0``
  (canonical sign, so ``q`` and ``-q`` serialize identically).
* A ``Pose`` maps local coordinates to world coordinates with the
  column-vector convention ``x_world = R @ x_local + t``.
* ``compose(a, b)`` applies ``b`` first, then ``a``.
* Camera poses are world<-cam: the pose of the camera body in the world.
* All lengths are meters, all angles radians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, EmptySequence, InvalidDepth

_QUAT_ATOL = 1e-9


def _as_unit_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion has zero or non-finite norm")
    q = q / n
    if q[3] < 0.0:
        q = -q
    return q


def quat_mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product, scalar-last. Rotation of q2 followed by q1."""
    x1, y1, z1, w1 = q1
    x2, y2, z2, w2 = q2
    return np.array(
        [
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to canonical scalar-last quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            q = np.array(
                [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
            q = np.array(
                [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
            )
        else:
            s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
            q = np.array(
                [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
            )
    return _as_unit_quat(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.array([0.0, 0.0, 0.0, 1.0])
    axis = axis / n
    half = 0.5 * angle
    return _as_unit_quat(np.concatenate([axis * np.sin(half), [np.cos(half)]]))


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Principal log map: rotation vector with magnitude in [0, pi]."""
    q = _as_unit_quat(q)
    v = q[:3]
    s = np.linalg.norm(v)
    w = min(q[3], 1.0)
    if s < 1e-12:
        # small angle: sin(t/2) ~ t/2, so vec ~ 2*v
        return 2.0 * v
    angle = 2.0 * np.arctan2(s, w)
    return v / s * angle


def rotvec_to_quat(r) -> np.ndarray:
    r = np.asarray(r, dtype=float).reshape(3)
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        return _as_unit_quat(np.concatenate([0.5 * r, [1.0]]))
    return _as_unit_quat(
        np.concatenate([r / angle * np.sin(0.5 * angle), [np.cos(0.5 * angle)]])
    )


@dataclass(frozen=True)
class Pose:
    """6-DoF rigid transform: position (m) + unit quaternion [x,y,z,w].

    Immutable value type; arrays are copied and marked read-only on
    construction, and the quaternion is renormalized and sign-canonicalized.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = _as_unit_quat(self.quaternion)
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "quaternion", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(x, y=None, z=None) -> "Pose":
        if y is None:
            return Pose(position=np.asarray(x, dtype=float))
        return Pose(position=np.array([x, y, z], dtype=float))

    @staticmethod
    def from_rotation_matrix(R, position=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(position=np.asarray(position, dtype=float), quaternion=matrix_to_quat(R))

    @staticmethod
    def from_axis_angle(axis, angle: float, position=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(position=np.asarray(position, dtype=float), quaternion=quat_from_axis_angle(axis, angle))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def apply(self, points) -> np.ndarray:
        """Transform local points into the parent frame: R @ p + t."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix.T + self.position

    def compose(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def invert(self) -> "Pose":
        return invert(self)

    def to_array(self) -> np.ndarray:
        """7-vector [x, y, z, qx, qy, qz, qw]."""
        return np.concatenate([self.position, self.quaternion])

    @staticmethod
    def from_array(a) -> "Pose":
        a = np.asarray(a, dtype=float).reshape(7)
        return Pose(position=a[:3], quaternion=a[3:])

    def is_close(self, other: "Pose", pos_tol: float = 1e-9, rot_tol: float = 1e-9) -> bool:
        return (
            np.linalg.norm(self.position - other.position) <= pos_tol
            and geodesic_angle(self.quaternion, other.quaternion) <= rot_tol
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; all quantities in pixels, image rectified."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def compose(a: Pose, b: Pose) -> Pose:
    """a after b: apply b first, then a."""
    return Pose(
        position=a.apply(b.position),
        quaternion=quat_mul(a.quaternion, b.quaternion),
    )


def invert(p: Pose) -> Pose:
    qc = quat_conj(p.quaternion)
    return Pose(position=-(quat_to_matrix(qc) @ p.position), quaternion=qc)


def project(point_world, cam_pose: Pose, k: CameraIntrinsics):
    """Project a world point through a world<-cam pose. Returns (pixel, depth).

    Raises BehindCamera when the camera-frame depth is <= 0.
    """
    p_cam = invert(cam_pose).apply(np.asarray(point_world, dtype=float))
    z = float(p_cam[2])
    if z <= 0.0:
        raise BehindCamera(f"point depth {z:.6g} <= 0")
    u = k.fx * p_cam[0] / z + k.cx
    v = k.fy * p_cam[1] / z + k.cy
    return np.array([u, v]), z


def backproject(pixel, depth: float, cam_pose: Pose, k: CameraIntrinsics) -> np.ndarray:
    """Lift a pixel + metric depth back to a world point."""
    if not np.isfinite(depth) or depth <= 0.0:
        raise InvalidDepth(f"depth {depth!r} must be positive and finite")
    u, v = np.asarray(pixel, dtype=float).reshape(2)
    p_cam = np.array([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth])
    return cam_pose.apply(p_cam)


def geodesic_angle(q1, q2) -> float:
    """Rotation angle between two unit quaternions, in [0, pi]; sign-invariant.

    Uses the relative rotation's atan2 form, which stays accurate for tiny
    angles where arccos of a near-1 dot product loses all precision.
    """
    rel = quat_mul(_as_unit_quat(q1), quat_conj(_as_unit_quat(q2)))
    return 2.0 * float(np.arctan2(np.linalg.norm(rel[:3]), abs(rel[3])))


def nearest_rotvec(q, reference) -> np.ndarray:
    """Rotation vector for q closest to `reference` among equivalents.

    Equivalent representations of one rotation all lie on a line through the
    origin: (theta + 2*pi*k) * n for integer k (negative coefficients flip
    the direction). Picks the k minimizing distance to the reference vector.
    """
    ref = np.asarray(reference, dtype=float).reshape(3)
    r = quat_to_rotvec(q)
    theta = np.linalg.norm(r)
    if theta < 1e-12:
        ref_norm = np.linalg.norm(ref)
        if ref_norm < 1e-12:
            return r
        axis = ref / ref_norm
        theta = 0.0
    else:
        axis = r / theta
    k = np.round((np.dot(ref, axis) - theta) / (2.0 * np.pi))
    return (theta + 2.0 * np.pi * k) * axis


def unwrap_rotations(quats) -> np.ndarray:
    """Map a quaternion sequence to continuous rotation vectors.

    Each output is picked among the equivalent rotation-vector
    representations (2*pi-shifted magnitudes, sign flips) closest to its
    predecessor, so the sequence never jumps across the +/-pi boundary.
    Converting each row back with rotvec_to_quat reproduces the input
    rotation up to quaternion sign.
    """
    qs = [np.asarray(q, dtype=float) for q in quats]
    if len(qs) == 0:
        raise EmptySequence("unwrap_rotations needs at least one quaternion")
    out = np.zeros((len(qs), 3))
    out[0] = quat_to_rotvec(qs[0])
    for i in range(1, len(qs)):
        out[i] = nearest_rotvec(qs[i], out[i - 1])
    return out
