"""Pinhole camera and projector model.

Conventions used across the package:
  * pixel coordinates have their origin at the top-left image corner, x grows
    rightward along columns, y grows downward along rows, and a pixel's center
    sits at integer coordinates,
  * world units are millimetres,
  * a pose maps world to camera space via q_cam = R q_world + T.

The intrinsic mapping supports a non-orthogonal pixel grid through the axis
angle theta (pi/2 for square pixels) and Brown-Conrady lens distortion with
three radial and two tangential coefficients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BehindCameraError,
    FormatError,
    InvalidArgumentError,
    InvalidCameraError,
    NumericError,
)

MIN_DEPTH = 1e-9
ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Focal scales (pixels), pixel axis angle (rad) and principal point."""

    alpha: float
    beta: float
    u0: float
    v0: float
    theta: float = math.pi / 2

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise InvalidArgumentError("focal scales must be positive")
        if not 0 < self.theta <= math.pi / 2:
            raise InvalidArgumentError(f"theta must be in (0, pi/2], got {self.theta}")

    def matrix(self) -> np.ndarray:
        sin_t = math.sin(self.theta)
        cot_t = math.cos(self.theta) / sin_t
        return np.array(
            [
                [self.alpha, -self.alpha * cot_t, self.u0],
                [0.0, self.beta / sin_t, self.v0],
                [0.0, 0.0, 1.0],
            ]
        )

    def inverse_matrix(self) -> np.ndarray:
        k = self.matrix()
        if abs(np.linalg.det(k)) < 1e-12:
            raise InvalidCameraError("intrinsic matrix is singular")
        return np.linalg.inv(k)


@dataclass(frozen=True)
class Distortion:
    """Brown-Conrady lens distortion on normalized image coordinates."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.k1 == self.k2 == self.k3 == self.p1 == self.p2 == 0.0


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform: q_cam = R q_world + T."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.T, dtype=np.float64).reshape(3)
        if np.abs(r.T @ r - np.eye(3)).max() > ORTHO_TOL:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise InvalidArgumentError("rotation determinant must be +1")
        object.__setattr__(self, "R", r)
        object.__setattr__(self, "T", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class Ray:
    """World-space ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise InvalidArgumentError("ray direction must be unit length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass
class CameraModel:
    intrinsics: Intrinsics
    distortion: Distortion
    pose: Pose
    resolution: tuple[int, int]  # (width, height) in pixels
    name: str = ""

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return camera_to_world(np.zeros(3), self.pose)


@dataclass
class Rig:
    """Two or more cameras plus the projector, all in one world frame."""

    cameras: list[CameraModel]
    projector: CameraModel


# -- rigid transforms ---------------------------------------------------------

def world_to_camera(points, pose: Pose) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    return p @ pose.R.T + pose.T


def camera_to_world(points, pose: Pose) -> np.ndarray:
    """Inverse pose map: R^-1 q - R^-1 T."""
    p = np.asarray(points, dtype=np.float64)
    return (p - pose.T) @ pose.R


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(rvec) -> np.ndarray:
    """Axis-angle vector to rotation matrix."""
    v = np.asarray(rvec, dtype=np.float64).reshape(3)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return np.eye(3) + skew(v)
    axis = v / angle
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_to_axis_angle(r) -> np.ndarray:
    """Rotation matrix to axis-angle vector (angle in [0, pi])."""
    r = np.asarray(r, dtype=np.float64)
    cos_a = max(-1.0, min(1.0, (np.trace(r) - 1.0) / 2.0))
    angle = math.acos(cos_a)
    if angle < 1e-12:
        return np.zeros(3)
    if math.pi - angle < 1e-6:
        # Near pi the off-diagonal difference vanishes; recover the axis from
        # the symmetric part instead.
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(m), 0.0))
        # Fix signs from the largest component.
        i = int(np.argmax(axis))
        if axis[i] > 0:
            for j in range(3):
                if j != i and m[i, j] < 0:
                    axis[j] = -axis[j]
        axis /= np.linalg.norm(axis)
        return axis * angle
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    axis /= 2.0 * math.sin(angle)
    return axis * angle


def orthonormalize(r) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


# -- projection ---------------------------------------------------------------

def distort_normalized(xy, dist: Distortion) -> np.ndarray:
    """Apply radial then tangential distortion to normalized coordinates."""
    xy = np.asarray(xy, dtype=np.float64)
    x = xy[..., 0]
    y = xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (dist.k1 + r2 * (dist.k2 + r2 * dist.k3))
    xd = x * radial + 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def undistort_normalized(xy, dist: Distortion, max_iter: int = 50, tol: float = 1e-10):
    """Invert distort_normalized by fixed-point iteration."""
    xy = np.asarray(xy, dtype=np.float64)
    if dist.is_zero:
        return xy.copy()
    xd = xy[..., 0]
    yd = xy[..., 1]
    x = xd.copy()
    y = yd.copy()
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (dist.k1 + r2 * (dist.k2 + r2 * dist.k3))
        tx = 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
        ty = dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
        x_new = (xd - tx) / radial
        y_new = (yd - ty) / radial
        step = max(np.abs(x_new - x).max(initial=0.0), np.abs(y_new - y).max(initial=0.0))
        x, y = x_new, y_new
        if step < tol:
            break
    else:
        redone = distort_normalized(np.stack([x, y], axis=-1), dist)
        residual = float(np.abs(redone - xy).max())
        raise NumericError(
            f"undistortion did not converge in {max_iter} iterations", residual=residual
        )
    return np.stack([x, y], axis=-1)


def project_points(points, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Project world points without the behind-camera check.

    Returns (pixels, depth); entries with depth <= MIN_DEPTH hold garbage and
    must be masked by the caller.
    """
    pc = world_to_camera(points, cam.pose)
    depth = pc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = pc[..., 0] / depth
        yn = pc[..., 1] / depth
    xy = distort_normalized(np.stack([xn, yn], axis=-1), cam.distortion)
    intr = cam.intrinsics
    sin_t = math.sin(intr.theta)
    cot_t = math.cos(intr.theta) / sin_t
    u = intr.alpha * xy[..., 0] - intr.alpha * cot_t * xy[..., 1] + intr.u0
    v = intr.beta / sin_t * xy[..., 1] + intr.v0
    return np.stack([u, v], axis=-1), depth


def project(points, cam: CameraModel) -> np.ndarray:
    """Project world points to pixels; points at or behind the camera raise."""
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    uv, depth = project_points(p.reshape(-1, 3), cam)
    bad = np.nonzero(depth <= MIN_DEPTH)[0]
    if bad.size:
        raise BehindCameraError(
            f"point {bad[0]} is on or behind the camera plane (z={depth[bad[0]]:.3g})",
            index=int(bad[0]),
        )
    return uv[0] if single else uv.reshape(p.shape[:-1] + (2,))


def undistort_pixel(p, intrinsics: Intrinsics, dist: Distortion) -> np.ndarray:
    """Map an observed pixel to the pixel an ideal (distortion-free) lens
    would have produced."""
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    pix = np.atleast_2d(p)
    kinv = intrinsics.inverse_matrix()
    ones = np.ones(pix.shape[:-1] + (1,))
    norm = np.concatenate([pix, ones], axis=-1) @ kinv.T
    xy = undistort_normalized(norm[..., :2], dist)
    k = intrinsics.matrix()
    homo = np.concatenate([xy, ones], axis=-1) @ k.T
    out = homo[..., :2]
    return out[0] if single else out.reshape(p.shape)


def pixel_rays(pixels, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """World-space rays through many pixel centers.

    Returns (origin, directions): the shared camera center and unit direction
    rows aligned with the input.
    """
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    kinv = cam.intrinsics.inverse_matrix()
    norm = np.concatenate([pix, np.ones((pix.shape[0], 1))], axis=-1) @ kinv.T
    xy = undistort_normalized(norm[:, :2], cam.distortion)
    q_cam = np.concatenate([xy, np.ones((pix.shape[0], 1))], axis=-1)
    origin = camera_to_world(np.zeros(3), cam.pose)
    through = camera_to_world(q_cam, cam.pose)
    dirs = through - origin
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origin, dirs


def pixel_to_ray(p, cam: CameraModel) -> Ray:
    """World-space ray through one pixel center."""
    origin, dirs = pixel_rays(np.asarray(p, dtype=np.float64).reshape(1, 2), cam)
    return Ray(origin, dirs[0])


# -- rig configuration files --------------------------------------------------

RIG_SCHEMA = "slscan-rig@1"


def _camera_record(cam: CameraModel) -> dict:
    return {
        "name": cam.name,
        "resolution": list(cam.resolution),
        "alpha": cam.intrinsics.alpha,
        "beta": cam.intrinsics.beta,
        "theta": cam.intrinsics.theta,
        "u0": cam.intrinsics.u0,
        "v0": cam.intrinsics.v0,
        "k1": cam.distortion.k1,
        "k2": cam.distortion.k2,
        "k3": cam.distortion.k3,
        "p1": cam.distortion.p1,
        "p2": cam.distortion.p2,
        "R": [float(x) for x in cam.pose.R.reshape(9)],
        "T": [float(x) for x in cam.pose.T],
    }


def _camera_from_record(rec: dict, fallback_name: str) -> CameraModel:
    try:
        intr = Intrinsics(
            alpha=float(rec["alpha"]),
            beta=float(rec["beta"]),
            u0=float(rec["u0"]),
            v0=float(rec["v0"]),
            theta=float(rec.get("theta", math.pi / 2)),
        )
        dist = Distortion(
            k1=float(rec.get("k1", 0.0)),
            k2=float(rec.get("k2", 0.0)),
            k3=float(rec.get("k3", 0.0)),
            p1=float(rec.get("p1", 0.0)),
            p2=float(rec.get("p2", 0.0)),
        )
        pose = Pose(np.array(rec["R"], dtype=np.float64).reshape(3, 3),
                    np.array(rec["T"], dtype=np.float64))
        res = tuple(int(x) for x in rec["resolution"])
        if len(res) != 2 or res[0] < 1 or res[1] < 1:
            raise InvalidArgumentError(f"bad resolution {rec['resolution']}")
    except KeyError as exc:
        raise FormatError(f"camera record missing field {exc}") from exc
    return CameraModel(intr, dist, pose, res, name=str(rec.get("name", fallback_name)))


def save_rig(rig: Rig, path) -> None:
    doc = {
        "schema": RIG_SCHEMA,
        "cameras": [_camera_record(c) for c in rig.cameras],
        "projector": _camera_record(rig.projector),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_rig(path) -> Rig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"rig file is not valid JSON: {exc}") from exc
    if doc.get("schema") != RIG_SCHEMA:
        raise FormatError(f"unexpected rig schema {doc.get('schema')!r}")
    cams = [
        _camera_from_record(rec, f"cam{i}") for i, rec in enumerate(doc.get("cameras", []))
    ]
    if "projector" not in doc:
        raise FormatError("rig file has no projector record")
    proj = _camera_from_record(doc["projector"], "projector")
    return Rig(cameras=cams, projector=proj)
