"""Joint type and axis inference from a demonstrated tip trajectory.

Prismatic: SVD line fit on centered positions. Revolute: plane fit by SVD,
then circle center/radius by damped nonlinear least squares on the radial
deviation, seeded from the algebraic circle fit. Model selection compares
residuals with a BIC-style complexity penalty. Only positions enter the
fits; orientations stay in the stored trajectory for replay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollinearPoints, DegenerateTrajectory, NoConvergence
from .graph import ArticulationAxis, JointType

MODEL_EPS = 1e-12
N_PARAMS_PRISMATIC = 4  # direction (2 dof) + line offset (2 dof)
N_PARAMS_REVOLUTE = 7  # plane normal (2) + plane offset (1) + center (2) + radius (1) + phase (1)
LOW_CONFIDENCE_SWEEP = np.deg2rad(10.0)
CIRCLE_MAX_ITERS = 200
CIRCLE_STEP_TOL = 1e-12


@dataclass(frozen=True)
class PrismaticFit:
    direction: np.ndarray  # unit, sign follows motion direction
    center: np.ndarray  # trajectory centroid
    residual_rmse: float  # RMS perpendicular distance to the line, m
    travel: float  # extent of projections along the direction, m


@dataclass(frozen=True)
class RevoluteFit:
    direction: np.ndarray  # plane normal; arc sweeps counterclockwise about it
    center: np.ndarray  # rotation center on the trajectory's mean plane
    radius: float
    residual_rmse: float  # combined in-plane radial + out-of-plane RMS, m
    sweep: float  # subtended angle of the ordered arc, rad


@dataclass(frozen=True)
class JointVerdict:
    joint_type: JointType
    axis: ArticulationAxis
    prismatic_score: float
    revolute_score: float | None  # None when the revolute fit failed
    prismatic: PrismaticFit
    revolute: RevoluteFit | None
    low_confidence: bool = False  # revolute winner with sweep below ~10 degrees


def fit_prismatic(positions) -> PrismaticFit:
    """Best-fit line through the trajectory positions."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise DegenerateTrajectory("line fit needs at least 2 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    if np.max(np.linalg.norm(centered, axis=1)) < 1e-9:
        raise DegenerateTrajectory("all points coincide")
    _, _, Vt = np.linalg.svd(centered)
    d = Vt[0]
    if np.dot(d, pts[-1] - pts[0]) < 0:
        d = -d
    proj = centered @ d
    perp = centered - np.outer(proj, d)
    return PrismaticFit(
        direction=d,
        center=centroid,
        residual_rmse=float(np.sqrt(np.mean(np.sum(perp**2, axis=1)))),
        travel=float(proj.max() - proj.min()),
    )


def _fit_circle_2d(q: np.ndarray):
    """Algebraic (linearized) circle fit: center (cx, cy) and radius."""
    A = np.column_stack([2.0 * q[:, 0], 2.0 * q[:, 1], np.ones(q.shape[0])])
    b = np.sum(q**2, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy, c = sol
    r = float(np.sqrt(max(c + cx * cx + cy * cy, MODEL_EPS)))
    return np.array([cx, cy, r])


def _refine_circle_2d(q: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Damped least squares on radial deviation sum(||q - c|| - r)^2."""
    def residuals(p):
        d = q - p[:2]
        dist = np.linalg.norm(d, axis=1)
        return dist - p[2], d, dist

    p = params.copy()
    res, d, dist = residuals(p)
    sse = float(res @ res)
    if not np.isfinite(sse):
        raise NoConvergence("non-finite circle residual")
    lam = 1e-8
    for _ in range(CIRCLE_MAX_ITERS):
        safe = np.maximum(dist, 1e-12)
        J = np.column_stack([-d[:, 0] / safe, -d[:, 1] / safe, -np.ones_like(dist)])
        g = J.T @ res
        JtJ = J.T @ J
        accepted = False
        for _ in range(25):
            try:
                step = np.linalg.solve(JtJ + lam * np.eye(3), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = p + step
            res_new, d_new, dist_new = residuals(cand)
            sse_new = float(res_new @ res_new)
            if np.isfinite(sse_new) and sse_new <= sse:
                p, res, d, dist, sse = cand, res_new, d_new, dist_new, sse_new
                lam = max(lam / 10.0, 1e-14)
                accepted = True
                break
            lam *= 10.0
        if not accepted or np.linalg.norm(step) < CIRCLE_STEP_TOL:
            break
    return p


def fit_revolute(positions) -> RevoluteFit:
    """Plane-plus-circle fit of the trajectory positions.

    The normal sign is chosen so the ordered arc advances counterclockwise
    about +direction; the center is pinned to the trajectory's mean plane
    (any point along the axis is geometrically equivalent).
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise CollinearPoints("circle fit needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, svals, Vt = np.linalg.svd(centered)
    if svals[1] <= 1e-9 * max(svals[0], 1e-12):
        raise CollinearPoints("points are collinear; the circle is underdetermined")

    normal = Vt[2]
    e1 = Vt[0]
    e2 = np.cross(normal, e1)
    q = np.column_stack([centered @ e1, centered @ e2])

    params = _fit_circle_2d(q)
    try:
        refined = _refine_circle_2d(q, params)
    except NoConvergence:
        refined = params
    radial = np.linalg.norm(q - refined[:2], axis=1) - refined[2]
    radial_alg = np.linalg.norm(q - params[:2], axis=1) - params[2]
    if float(radial_alg @ radial_alg) < float(radial @ radial):
        refined = params  # keep the algebraic fit when refinement did not improve
        radial = radial_alg

    cx, cy, radius = refined
    if radius <= 0 or not np.isfinite(radius):
        raise NoConvergence("circle fit collapsed to a non-positive radius")
    center = centroid + cx * e1 + cy * e2

    rel = q - np.array([cx, cy])
    angles = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    if angles[-1] - angles[0] < 0:
        normal = -normal
        angles = -angles
    sweep = float(min(angles.max() - angles.min(), 2.0 * np.pi))

    out_of_plane = centered @ normal
    rmse = float(np.sqrt(np.mean(radial**2 + out_of_plane**2)))
    return RevoluteFit(
        direction=normal, center=center, radius=float(radius), residual_rmse=rmse, sweep=sweep
    )


def _penalized_score(n: int, rmse: float, n_params: int, lam: float) -> float:
    return n * np.log(rmse * rmse + MODEL_EPS) + lam * n_params


def select_joint(positions, lambda_penalty: float | None = None) -> JointVerdict:
    """Fit both joint models and pick the lower penalized score.

    score_m = n * ln(rmse_m^2 + eps) + lambda * k_m with k = 4 (prismatic)
    and 7 (revolute); lambda defaults to ln(n). Falls back to prismatic
    when the revolute fit fails. A revolute verdict with a sweep under
    ~10 degrees is annotated low-confidence (short arcs are near-ambiguous
    with lines); no automatic override happens.
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    if n < 3:
        raise ValueError("joint selection needs at least 3 points")
    lam = float(np.log(n)) if lambda_penalty is None else float(lambda_penalty)

    pris = fit_prismatic(pts)
    pris_score = _penalized_score(n, pris.residual_rmse, N_PARAMS_PRISMATIC, lam)

    rev = None
    rev_score = None
    try:
        rev = fit_revolute(pts)
        rev_score = _penalized_score(n, rev.residual_rmse, N_PARAMS_REVOLUTE, lam)
    except (CollinearPoints, NoConvergence):
        pass

    if rev_score is not None and rev_score < pris_score:
        axis = ArticulationAxis(
            joint_type=JointType.REVOLUTE, center=rev.center, direction=rev.direction,
            range=rev.sweep,
        )
        return JointVerdict(
            joint_type=JointType.REVOLUTE, axis=axis,
            prismatic_score=pris_score, revolute_score=rev_score,
            prismatic=pris, revolute=rev,
            low_confidence=rev.sweep < LOW_CONFIDENCE_SWEEP,
        )
    axis = ArticulationAxis(
        joint_type=JointType.PRISMATIC, center=pris.center, direction=pris.direction,
        range=pris.travel,
    )
    return JointVerdict(
        joint_type=JointType.PRISMATIC, axis=axis,
        prismatic_score=pris_score, revolute_score=rev_score,
        prismatic=pris, revolute=rev,
    )
