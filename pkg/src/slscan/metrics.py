"""Scan quality metrics: plane fits, flatness, squareness, length accuracy and
sampling density.

Plane convention: unit normal n and offset delta with n . p = delta for points
p on the plane; the signed distance of a point is delta - n . p.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

log = logging.getLogger(__name__)

RANSAC_ITERATIONS = 500
RANSAC_EPS_FACTOR = 3.0
# Exact synthetic clouds have zero MAD; a literal 3x multiple would reject
# every point, so the derived eps gets a tiny floor.
RANSAC_EPS_FLOOR = 1e-9
UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Plane:
    normal: tuple[float, float, float]
    delta: float
    inlier_eps: float
    inlier_count: int

    def normal_array(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=np.float64)


@dataclass(frozen=True)
class LinearityResult:
    """Flatness of a cloud against a plane."""

    e_avg: float  # mean absolute plane distance
    rmse: float
    count: int


@dataclass(frozen=True)
class OrthogonalityResult:
    """Pairwise squareness of three plane normals."""

    dots: tuple[float, float, float]  # (n1.n2, n1.n3, n2.n3)
    magnitude: float
    angles_deg: tuple[float, float, float]  # folded to [0, 90]
    raw_angles_deg: tuple[float, float, float]  # acos of the signed dot


@dataclass(frozen=True)
class PatchDensity:
    area_cm2: float
    point_density: float  # points per cm^2
    face_density: float | None  # faces per cm^2


def _fit_plane_lsq(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares plane through points: centroid plus the direction of
    least variance."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals.size < 3 or svals[1] <= svals[0] * 1e-10 + 1e-300:
        raise DegenerateInputError("points are collinear, no unique plane")
    normal = vt[2]
    normal = _fix_sign(normal)
    return normal, float(normal @ centroid)


def _fix_sign(normal: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(normal)))
    return -normal if normal[i] < 0 else normal


def plane_distances(points, plane: Plane) -> np.ndarray:
    n = plane.normal_array()
    return plane.delta - np.asarray(points, dtype=np.float64) @ n


def ransac_plane(points, iterations: int = RANSAC_ITERATIONS,
                 inlier_eps: float | None = None, seed: int = 0) -> Plane:
    """Robust plane fit.

    Each hypothesis draws 3 points with its own deterministic RNG stream
    (derived from seed and the hypothesis index, so any evaluation order gives
    the same result), scores by inlier count with RMSE as tie break, and the
    best consensus set gets a least-squares refit.

    Args:
        points: (N, 3) cloud.
        iterations: hypothesis count.
        inlier_eps: absolute distance bound for inliers (mm). Default: 3x the
            median absolute deviation of an initial least-squares fit.
        seed: RNG seed.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if n < 3:
        raise InvalidArgumentError(f"plane fit needs at least 3 points, got {n}")
    # also validates non-collinearity
    ls_normal, ls_delta = _fit_plane_lsq(pts)

    if inlier_eps is None:
        res = ls_delta - pts @ ls_normal
        mad = float(np.median(np.abs(res - np.median(res))))
        inlier_eps = max(RANSAC_EPS_FACTOR * mad, RANSAC_EPS_FLOOR)
        log.debug("inlier eps defaulted to %.6g mm", inlier_eps)

    best = None  # (count, rmse, index, normal, delta)
    for i in range(iterations):
        rng = np.random.default_rng((seed, i))
        idx = rng.choice(n, size=3, replace=False)
        p0, p1, p2 = pts[idx]
        cross = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(cross)
        if norm < 1e-12:
            continue
        normal = cross / norm
        delta = float(normal @ p0)
        dist = np.abs(delta - pts @ normal)
        inliers = dist <= inlier_eps
        count = int(inliers.sum())
        rmse = float(np.sqrt(np.mean(dist[inliers] ** 2))) if count else math.inf
        if best is None or (count, -rmse) > (best[0], -best[1]):
            best = (count, rmse, i, normal, delta)
    if best is None:
        raise DegenerateInputError("no valid plane hypothesis found")

    inliers = np.abs(best[4] - pts @ best[3]) <= inlier_eps
    normal, delta = _fit_plane_lsq(pts[inliers])
    dist = np.abs(delta - pts @ normal)
    final_inliers = int((dist <= inlier_eps).sum())
    return Plane(
        normal=tuple(float(x) for x in normal),
        delta=delta,
        inlier_eps=float(inlier_eps),
        inlier_count=final_inliers,
    )


def segment_planes(points, count: int, iterations: int = RANSAC_ITERATIONS,
                   inlier_eps: float | None = None, seed: int = 0) -> list[Plane]:
    """Sequential RANSAC: fit a plane, remove its inliers, repeat."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if count < 1:
        raise InvalidArgumentError(f"plane count must be at least 1, got {count}")
    planes = []
    for k in range(count):
        if pts.shape[0] < 3:
            raise InvalidArgumentError(
                f"only {len(planes)} of {count} planes could be fitted: "
                f"{pts.shape[0]} points left"
            )
        plane = ransac_plane(pts, iterations=iterations, inlier_eps=inlier_eps,
                             seed=seed + k)
        planes.append(plane)
        keep = np.abs(plane_distances(pts, plane)) > plane.inlier_eps
        pts = pts[keep]
    return planes


def _check_unit(normal, what: str) -> np.ndarray:
    n = np.asarray(normal, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(n) - 1.0) > UNIT_TOL:
        raise InvalidArgumentError(f"{what} must be a unit vector")
    return n


def linearity(points, plane: Plane) -> LinearityResult:
    """Mean absolute and RMS distance of a cloud to a plane."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise InvalidArgumentError("cannot measure flatness of an empty cloud")
    _check_unit(plane.normal, "plane normal")
    dist = plane_distances(pts, plane)
    return LinearityResult(
        e_avg=float(np.mean(np.abs(dist))),
        rmse=float(np.sqrt(np.mean(dist ** 2))),
        count=pts.shape[0],
    )


def orthogonality(plane1: Plane, plane2: Plane, plane3: Plane) -> OrthogonalityResult:
    """Pairwise dot products and angles of three plane normals.

    Angles come in two flavors: the raw angle between the normals in
    [0, 180] degrees, and the angle folded to [0, 90] (acos of |dot|), which
    is the one to compare against a physical 90-degree edge.
    """
    n1 = _check_unit(plane1.normal, "plane 1 normal")
    n2 = _check_unit(plane2.normal, "plane 2 normal")
    n3 = _check_unit(plane3.normal, "plane 3 normal")
    dots = (float(n1 @ n2), float(n1 @ n3), float(n2 @ n3))
    folded = tuple(
        math.degrees(math.acos(min(1.0, abs(d)))) for d in dots
    )
    raw = tuple(
        math.degrees(math.acos(max(-1.0, min(1.0, d)))) for d in dots
    )
    return OrthogonalityResult(
        dots=dots,
        magnitude=float(np.linalg.norm(dots)),
        angles_deg=folded,
        raw_angles_deg=raw,
    )


def accuracy(length_reference: float, length_scan: float) -> float:
    """Absolute error between a known length and its scanned counterpart."""
    if length_reference <= 0 or length_scan <= 0:
        raise InvalidArgumentError("lengths must be positive")
    return abs(float(length_reference) - float(length_scan))


def sampling_rate(width_cm: float, height_cm: float, n_points: int,
                  n_faces: int | None = None) -> PatchDensity:
    """Point (and face) density of a rectangular patch."""
    area = float(width_cm) * float(height_cm)
    if area <= 0:
        raise InvalidArgumentError("patch area must be positive")
    return PatchDensity(
        area_cm2=area,
        point_density=n_points / area,
        face_density=None if n_faces is None else n_faces / area,
    )


def aggregate_sampling(patches: list[PatchDensity]) -> PatchDensity:
    """Area-weighted mean point and face density over several patches.

    The result covers the union: its area is the total patch area, and its
    densities are the area-weighted means. Face density is None as soon as
    any patch lacks one.
    """
    if not patches:
        raise InvalidArgumentError("need at least one patch")
    areas = np.array([p.area_cm2 for p in patches])
    pts = np.array([p.point_density for p in patches])
    total = float(areas.sum())
    mean_points = float((pts * areas).sum() / total)
    if any(p.face_density is None for p in patches):
        mean_faces = None
    else:
        faces = np.array([p.face_density for p in patches])
        mean_faces = float((faces * areas).sum() / total)
    return PatchDensity(area_cm2=total, point_density=mean_points,
                        face_density=mean_faces)


@dataclass(frozen=True)
class MetricReport:
    """Bundle of every metric the eval stage can produce. Optional entries
    stay None when the corresponding measurement was not requested."""

    point_count: int
    flatness: LinearityResult | None = None
    plane: Plane | None = None
    squareness: OrthogonalityResult | None = None
    length_errors: tuple[float, ...] = ()
    sampling: tuple[PatchDensity, ...] = ()

    def mean_length_error(self) -> float | None:
        if not self.length_errors:
            return None
        return float(np.mean(self.length_errors))

    def to_dict(self) -> dict:
        out: dict = {"point_count": self.point_count}
        if self.plane is not None:
            out["plane"] = {
                "normal": list(self.plane.normal),
                "delta": self.plane.delta,
                "inlier_eps": self.plane.inlier_eps,
                "inlier_count": self.plane.inlier_count,
            }
        if self.flatness is not None:
            out["flatness"] = {
                "e_avg_mm": self.flatness.e_avg,
                "rmse_mm": self.flatness.rmse,
                "count": self.flatness.count,
            }
        if self.squareness is not None:
            out["squareness"] = {
                "dots": list(self.squareness.dots),
                "magnitude": self.squareness.magnitude,
                "angles_deg": list(self.squareness.angles_deg),
                "raw_angles_deg": list(self.squareness.raw_angles_deg),
            }
        if self.length_errors:
            out["length"] = {
                "errors_mm": list(self.length_errors),
                "mean_mm": self.mean_length_error(),
            }
        if self.sampling:
            out["sampling"] = [
                {
                    "area_cm2": p.area_cm2,
                    "points_per_cm2": p.point_density,
                    "faces_per_cm2": p.face_density,
                }
                for p in self.sampling
            ]
        return out


def format_report(report: MetricReport) -> str:
    """Human-readable table of a MetricReport, one section per metric."""
    lines = [f"points: {report.point_count}"]
    if report.flatness is not None:
        lines.append("flatness (mm)")
        lines.append(f"  e_avg  {report.flatness.e_avg:.10f}")
        lines.append(f"  rmse   {report.flatness.rmse:.10f}")
    if report.squareness is not None:
        lines.append("squareness (deg)")
        for label, ang in zip(("1-2", "1-3", "2-3"), report.squareness.angles_deg):
            lines.append(f"  planes {label}  {ang:.10f}")
    if report.length_errors:
        lines.append("length error (mm)")
        for i, err in enumerate(report.length_errors):
            lines.append(f"  segment {i}  {err:.10f}")
        lines.append(f"  mean       {report.mean_length_error():.10f}")
    if report.sampling:
        lines.append("sampling density")
        for i, p in enumerate(report.sampling):
            face = "-" if p.face_density is None else f"{p.face_density:.1f}"
            lines.append(
                f"  patch {i}  {p.area_cm2:.2f} cm2  "
                f"{p.point_density:.1f} pts/cm2  {face} faces/cm2"
            )
    return "\n".join(lines) + "\n"
