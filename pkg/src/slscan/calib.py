"""Camera pose estimation from 2D-3D correspondences.

The pose is parameterized as a 6-vector (axis-angle rotation, translation) and
refined by Levenberg-Marquardt over the pixel reprojection residuals with an
analytic Jacobian. Multi-camera rigs calibrate one camera at a time against
the same world-frame reference points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import (
    CameraModel,
    Distortion,
    Intrinsics,
    Pose,
    distort_normalized,
    orthonormalize,
    project,
    rodrigues,
    rotation_to_axis_angle,
    skew,
)
from .errors import BehindCameraError, FormatError, InvalidArgumentError

log = logging.getLogger(__name__)

LM_LAMBDA0 = 1e-3
LM_STEP_TOL = 1e-10
LM_RESIDUAL_TOL = 1e-12
LM_MAX_REJECTS = 20


@dataclass(frozen=True)
class Correspondence:
    """Observed pixel and the known world point it images."""

    image: tuple[float, float]
    world: tuple[float, float, float]


@dataclass
class CalibResult:
    pose: Pose
    residual: float  # mean reprojection distance, pixels
    iterations: int
    converged: bool


def reprojection_error(corrs, cam: CameraModel) -> float:
    """Mean Euclidean pixel distance between observations and projections."""
    if len(corrs) == 0:
        raise InvalidArgumentError("need at least one correspondence")
    world = np.array([c.world for c in corrs], dtype=np.float64)
    image = np.array([c.image for c in corrs], dtype=np.float64)
    try:
        proj = project(world, cam)
    except BehindCameraError as exc:
        raise BehindCameraError(
            f"correspondence {exc.index} lies behind the camera", index=exc.index
        ) from exc
    return float(np.mean(np.linalg.norm(proj - image, axis=1)))


def _rotation_point_jacobian(rvec: np.ndarray, r: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """d(R(rvec) p)/d rvec for each point, shape (n, 3, 3)."""
    n = pts.shape[0]
    phi2 = float(rvec @ rvec)
    rp = pts @ r.T
    out = np.empty((n, 3, 3))
    if phi2 < 1e-16:
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            out[:, :, i] = np.cross(np.broadcast_to(e, (n, 3)), rp)
        return out
    sv = skew(rvec)
    eye_r = np.eye(3) - r
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        gen = (rvec[i] * sv + skew(np.cross(rvec, eye_r @ e))) / phi2
        out[:, :, i] = rp @ gen.T
    return out


def pose_residuals(params, intrinsics: Intrinsics, dist: Distortion, image_pts, world_pts):
    """Reprojection residual vector and its Jacobian at a pose parameter point.

    Args:
        params: (6,) axis-angle rotation followed by translation.
        image_pts: (n, 2) observed pixels.
        world_pts: (n, 3) world points.

    Returns:
        (residuals, jacobian): (2n,) stacked (du, dv) per point and the
        (2n, 6) analytic Jacobian.

    Raises:
        BehindCameraError: some world point has non-positive depth here.
    """
    params = np.asarray(params, dtype=np.float64)
    rvec = params[:3]
    tvec = params[3:]
    world_pts = np.asarray(world_pts, dtype=np.float64)
    image_pts = np.asarray(image_pts, dtype=np.float64)
    n = world_pts.shape[0]
    r = rodrigues(rvec)
    pc = world_pts @ r.T + tvec
    z = pc[:, 2]
    bad = np.nonzero(z <= 1e-9)[0]
    if bad.size:
        raise BehindCameraError(
            f"point {bad[0]} behind camera during pose refinement", index=int(bad[0])
        )

    xn = pc[:, 0] / z
    yn = pc[:, 1] / z
    xy_d = distort_normalized(np.stack([xn, yn], axis=-1), dist)

    sin_t = np.sin(intrinsics.theta)
    cot_t = np.cos(intrinsics.theta) / sin_t
    u = intrinsics.alpha * xy_d[:, 0] - intrinsics.alpha * cot_t * xy_d[:, 1] + intrinsics.u0
    v = intrinsics.beta / sin_t * xy_d[:, 1] + intrinsics.v0
    res = np.stack([u, v], axis=-1) - image_pts

    # chain: pixel <- distorted <- normalized <- camera point <- (rvec, T)
    j_cam = np.zeros((n, 3, 6))
    j_cam[:, :, :3] = _rotation_point_jacobian(rvec, r, world_pts)
    j_cam[:, :, 3:] = np.broadcast_to(np.eye(3), (n, 3, 3))

    j_norm = np.zeros((n, 2, 3))
    j_norm[:, 0, 0] = 1.0 / z
    j_norm[:, 0, 2] = -pc[:, 0] / (z * z)
    j_norm[:, 1, 1] = 1.0 / z
    j_norm[:, 1, 2] = -pc[:, 1] / (z * z)

    r2 = xn * xn + yn * yn
    radial = 1.0 + r2 * (dist.k1 + r2 * (dist.k2 + r2 * dist.k3))
    dr = dist.k1 + 2.0 * dist.k2 * r2 + 3.0 * dist.k3 * r2 * r2
    j_dist = np.empty((n, 2, 2))
    j_dist[:, 0, 0] = radial + 2.0 * xn * xn * dr + 2.0 * dist.p1 * yn + 6.0 * dist.p2 * xn
    j_dist[:, 0, 1] = 2.0 * xn * yn * dr + 2.0 * dist.p1 * xn + 2.0 * dist.p2 * yn
    j_dist[:, 1, 0] = 2.0 * xn * yn * dr + 2.0 * dist.p1 * xn + 2.0 * dist.p2 * yn
    j_dist[:, 1, 1] = radial + 2.0 * yn * yn * dr + 6.0 * dist.p1 * yn + 2.0 * dist.p2 * xn

    j_pix = np.array(
        [
            [intrinsics.alpha, -intrinsics.alpha * cot_t],
            [0.0, intrinsics.beta / sin_t],
        ]
    )

    jac = np.einsum("ab,nbc,ncd->nad", j_pix, j_dist, np.einsum("nab,nbc->nac", j_norm, j_cam))
    return res.reshape(-1), jac.reshape(-1, 6)


def estimate_pose(
    intrinsics: Intrinsics,
    dist: Distortion,
    corrs,
    init: Pose,
    max_iters: int = 100,
) -> CalibResult:
    """Refine a camera pose by damped least squares on reprojection error.

    The damping factor starts at 1e-3, multiplies by 10 on a rejected step and
    divides by 10 on an accepted one. Convergence is declared when the step
    norm drops below 1e-10 or an accepted step improves the mean residual by
    less than 1e-12; twenty consecutive rejected steps end the search with the
    best pose found so far.
    """
    if len(corrs) < 4:
        raise InvalidArgumentError(
            f"pose estimation needs at least 4 correspondences, got {len(corrs)}"
        )
    world = np.array([c.world for c in corrs], dtype=np.float64)
    image = np.array([c.image for c in corrs], dtype=np.float64)
    params = np.concatenate([rotation_to_axis_angle(init.R), np.asarray(init.T, dtype=np.float64)])

    def mean_dist(res_vec):
        return float(np.mean(np.linalg.norm(res_vec.reshape(-1, 2), axis=1)))

    res, jac = pose_residuals(params, intrinsics, dist, image, world)
    cost = float(res @ res)
    err = mean_dist(res)
    best_params = params.copy()
    best_err = err

    lam = LM_LAMBDA0
    converged = False
    iterations = 0
    rejects = 0

    for iterations in range(1, max_iters + 1):
        jtj = jac.T @ jac
        jtr = jac.T @ res
        try:
            step = np.linalg.solve(jtj + lam * np.eye(6), -jtr)
        except np.linalg.LinAlgError:
            step = None
        accepted = False
        if step is not None:
            try:
                new_res, new_jac = pose_residuals(params + step, intrinsics, dist, image, world)
                new_cost = float(new_res @ new_res)
            except BehindCameraError:
                new_cost = np.inf
            if new_cost < cost:
                accepted = True
        if accepted:
            params = params + step
            res, jac = new_res, new_jac
            drop = err - mean_dist(new_res)
            cost = new_cost
            err = mean_dist(res)
            if err < best_err:
                best_err = err
                best_params = params.copy()
            lam = max(lam / 10.0, 1e-15)
            rejects = 0
            if float(np.linalg.norm(step)) < LM_STEP_TOL or drop < LM_RESIDUAL_TOL:
                converged = True
                break
        else:
            rejects += 1
            lam *= 10.0
            if rejects >= LM_MAX_REJECTS:
                log.warning("pose refinement stalled after %d rejected steps", rejects)
                break
            # A rejected step does not consume the step-size convergence test,
            # but a tiny proposed step with no improvement means we are done.
            if step is not None and float(np.linalg.norm(step)) < LM_STEP_TOL:
                converged = True
                break

    pose = Pose(orthonormalize(rodrigues(best_params[:3])), best_params[3:])
    return CalibResult(pose=pose, residual=best_err, iterations=iterations, converged=converged)


# -- correspondence files -----------------------------------------------------

def load_correspondences_csv(path) -> list[Correspondence]:
    """Read 'u,v,X,Y,Z' lines ('#' comments allowed) into correspondences."""
    path = Path(path)
    rows = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path.name}:{ln}: expected 5 comma-separated values")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path.name}:{ln}: {exc}") from exc
        rows.append(Correspondence(image=(vals[0], vals[1]), world=(vals[2], vals[3], vals[4])))
    return rows


def save_correspondences_csv(corrs, path) -> None:
    lines = ["# image_x,image_y,world_x,world_y,world_z"]
    for c in corrs:
        lines.append(
            f"{c.image[0]:.10g},{c.image[1]:.10g},"
            f"{c.world[0]:.10g},{c.world[1]:.10g},{c.world[2]:.10g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
