import numpy as np
import pytest

from artigraph.errors import BehindCamera, EmptySequence, InvalidDepth
from artigraph.geometry import (
    CameraIntrinsics,
    Pose,
    backproject,
    compose,
    geodesic_angle,
    invert,
    project,
    quat_from_axis_angle,
    quat_to_rotvec,
    rotvec_to_quat,
    unwrap_rotations,
)
from conftest import random_pose

K = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def test_compose_identity():
    p = Pose.from_axis_angle([0, 1, 0], 0.4, position=(1.0, -2.0, 0.5))
    assert compose(Pose.identity(), p).is_close(p)
    assert compose(p, Pose.identity()).is_close(p)


def test_compose_inverse_is_identity():
    p = Pose.from_axis_angle([1, 2, 3], 1.1, position=(0.3, 0.1, -0.7))
    assert compose(p, invert(p)).is_close(Pose.identity(), 1e-9, 1e-9)
    assert compose(invert(p), p).is_close(Pose.identity(), 1e-9, 1e-9)


def test_compose_pure_translations():
    a = Pose.from_translation(1, 0, 0)
    b = Pose.from_translation(0, 2, 0)
    assert np.allclose(compose(a, b).position, [1, 2, 0])


def test_compose_associative(rng):
    for _ in range(50):
        a, b, c = (random_pose(rng) for _ in range(3))
        lhs = compose(compose(a, b), c)
        rhs = compose(a, compose(b, c))
        assert lhs.is_close(rhs, 1e-9, 1e-7)


def test_application_convention():
    # x_world = R @ x_local + t with a non-symmetric case: 90 deg about z
    p = Pose.from_axis_angle([0, 0, 1], np.pi / 2, position=(1.0, 0.0, 0.0))
    out = p.apply([1.0, 0.0, 0.0])
    assert np.allclose(out, [1.0, 1.0, 0.0], atol=1e-12)


def test_invert_cases():
    assert invert(Pose.identity()).is_close(Pose.identity())
    assert np.allclose(invert(Pose.from_translation(1, 2, 3)).position, [-1, -2, -3])
    rz = Pose.from_axis_angle([0, 0, 1], np.pi / 2)
    assert invert(rz).is_close(Pose.from_axis_angle([0, 0, 1], -np.pi / 2))


def test_quaternion_canonical_sign(rng):
    for _ in range(20):
        q = rng.normal(size=4)
        p = Pose(quaternion=q / np.linalg.norm(q))
        assert p.quaternion[3] >= 0
        assert abs(np.linalg.norm(p.quaternion) - 1.0) < 1e-9
        c = compose(p, random_pose(rng))
        assert c.quaternion[3] >= 0


def test_project_on_axis():
    pix, depth = project([0.0, 0.0, 1.0], Pose.identity(), K)
    assert np.allclose(pix, [K.cx, K.cy])
    assert depth == pytest.approx(1.0)


def test_project_pinhole_formula():
    # fx * x / z + cx = 500 * 0.1 / 1 + 320 = 370
    pix, _ = project([0.1, 0.0, 1.0], Pose.identity(), K)
    assert pix[0] == pytest.approx(370.0)


def test_project_behind_camera():
    with pytest.raises(BehindCamera):
        project([0.0, 0.0, -0.5], Pose.identity(), K)


def test_backproject_center():
    out = backproject([K.cx, K.cy], 1.0, Pose.identity(), K)
    assert np.allclose(out, [0, 0, 1])


def test_backproject_invalid_depth():
    for d in (0.0, -1.0, np.nan, np.inf):
        with pytest.raises(InvalidDepth):
            backproject([100, 100], d, Pose.identity(), K)


def test_project_backproject_roundtrip(rng):
    for _ in range(100):
        cam = random_pose(rng)
        pix = rng.uniform([0, 0], [K.width, K.height])
        depth = rng.uniform(0.2, 5.0)
        world = backproject(pix, depth, cam, K)
        pix2, depth2 = project(world, cam, K)
        assert np.linalg.norm(pix2 - pix) < 1e-6
        assert abs(depth2 - depth) < 1e-6


def test_geodesic_angle_properties(rng):
    q = quat_from_axis_angle([1, 1, 0], 0.9)
    assert geodesic_angle(q, q) == pytest.approx(0.0, abs=1e-12)
    assert geodesic_angle(q, -q) == pytest.approx(0.0, abs=1e-12)
    rz = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    assert geodesic_angle([0, 0, 0, 1], rz) == pytest.approx(np.pi / 2)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=-1, fy=500, cx=320, cy=240, width=640, height=480)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=500, fy=500, cx=700, cy=240, width=640, height=480)


def test_unwrap_constant():
    q = quat_from_axis_angle([0, 0, 1], 0.3)
    vecs = unwrap_rotations([q] * 5)
    assert np.allclose(vecs, vecs[0])


def test_unwrap_single_and_empty():
    q = quat_from_axis_angle([0, 1, 0], 1.2)
    vecs = unwrap_rotations([q])
    assert np.allclose(vecs[0], quat_to_rotvec(q))
    with pytest.raises(EmptySequence):
        unwrap_rotations([])


def test_unwrap_crosses_pi_without_jump():
    angles = np.deg2rad(np.arange(170, 191, 5))
    quats = [quat_from_axis_angle([0, 0, 1], a) for a in angles]
    vecs = unwrap_rotations(quats)
    z = vecs[:, 2]
    assert np.all(np.diff(z) > 0)  # monotone through pi
    assert np.allclose(z, angles, atol=1e-12)
    # the naive per-frame log map jumps by ~2*pi at the boundary
    naive = np.array([quat_to_rotvec(q)[2] for q in quats])
    assert np.max(np.abs(np.diff(naive))) > np.pi


def test_unwrap_invertible_and_bounded_steps(rng):
    quats = []
    q = np.array([0.0, 0.0, 0.0, 1.0])
    for _ in range(200):
        from artigraph.geometry import quat_mul

        step = quat_from_axis_angle(rng.normal(size=3), rng.uniform(0, 0.8))
        q = quat_mul(step, q)
        quats.append(q)
    vecs = unwrap_rotations(quats)
    steps = np.linalg.norm(np.diff(vecs, axis=0), axis=1)
    assert np.all(steps < np.pi)
    for v, q in zip(vecs, quats):
        assert geodesic_angle(rotvec_to_quat(v), q) < 1e-9
