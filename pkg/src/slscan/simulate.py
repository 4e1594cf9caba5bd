"""Synthetic structured-light acquisition.

Renders every pattern frame as seen by each rig camera and records exact
per-pixel ground truth alongside.

Shading model: a surface point lit by the projector receives
``albedo * (230 if pattern high else 25) + 10`` intensity; ray misses, points
outside the projector frustum and points occluded from the projector get the
10-level ambient term only. Optional Gaussian sensor noise (sigma in intensity
levels, one seeded stream per image so scheduling cannot change output) is
added to every pixel before rounding and clamping to [0, 255].

Projector sampling: a hit point projecting to continuous projector coordinates
(px, py) samples the pattern at (floor px, floor py); projector pixel (i, j)
owns the half-open square [i, i+1) x [j, j+1). Ground truth records the same
floored pixel, so a noise-free decode must reproduce it exactly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .camera import MIN_DEPTH, CameraModel, Rig, pixel_rays, project_points
from .errors import InvalidArgumentError, InvalidRigError
from .patterns import HI, PatternSequence, SequenceSpec
from .scene import Scene, ScenePack, cast_rays
from .utils import thread_count

log = logging.getLogger(__name__)

HI_LEVEL = 230.0
LO_LEVEL = 25.0
AMBIENT = 10.0

# Ground-truth flag bits. SHADOW means occluded from the projector; a hit point
# outside the projector frustum has HIT set, no SHADOW, and no projector pixel.
FLAG_HIT = 1
FLAG_SHADOW = 2

_SHADOW_EPS = 1e-6


@dataclass
class CameraView:
    """Cached ray-cast geometry of one camera against a static scene."""

    shape: tuple[int, int]  # (height, width)
    hit: np.ndarray  # (H, W) bool
    point: np.ndarray  # (H, W, 3) world hit points, NaN where missed
    albedo: np.ndarray  # (H, W)
    lit: np.ndarray  # (H, W) bool: hit, projector-visible, inside frustum
    shadowed: np.ndarray  # (H, W) bool: hit but occluded from the projector
    proj_pix: np.ndarray  # (H, W, 2) int32 floored projector pixel, -1 unlit


@dataclass
class CameraTruth:
    """Exact per-pixel scan truth for one camera."""

    point: np.ndarray  # (H, W, 3) float64, NaN rows where no geometry was hit
    proj: np.ndarray  # (H, W, 2) int32 projector pixel, -1 where none
    flags: np.ndarray  # (H, W) uint8 of FLAG_* bits


@dataclass
class GroundTruth:
    cameras: list[CameraTruth]


@dataclass
class AcquisitionMeta:
    sequence: SequenceSpec
    noise_sigma: float
    seed: int


@dataclass
class AcquisitionSet:
    """All captured frames of one scan plus the rig that produced them."""

    stacks: list[np.ndarray]  # per camera: (F, H, W) uint8 in projection order
    rig: Rig
    meta: AcquisitionMeta


def trace_view(scene: Scene, cam: CameraModel, projector: CameraModel,
               pack: ScenePack | None = None) -> CameraView:
    """Cast all camera pixel rays once and resolve projector visibility."""
    if np.linalg.norm(cam.center() - projector.center()) < 1e-9:
        raise InvalidRigError("camera and projector centers coincide")
    if pack is None:
        pack = scene.pack()
    w, h = cam.resolution
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    pixels = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=-1).astype(np.float64)
    origin, dirs = pixel_rays(pixels, cam)
    origins = np.broadcast_to(origin, dirs.shape)
    t, prim, _ = cast_rays(pack, origins, dirs)
    hit = prim >= 0

    points = np.full((h * w, 3), np.nan)
    points[hit] = origin + t[hit, None] * dirs[hit]

    albedo_by_prim = np.array([p.albedo for p in scene.primitives], dtype=np.float64)
    albedo = np.zeros(h * w)
    if hit.any():
        albedo[hit] = albedo_by_prim[prim[hit]]

    # Occlusion: march from each hit point toward the projector center.
    shadowed = np.zeros(h * w, dtype=bool)
    proj_center = projector.center()
    if hit.any():
        to_proj = proj_center - points[hit]
        dist = np.linalg.norm(to_proj, axis=1)
        sdir = to_proj / dist[:, None]
        sorigin = points[hit] + sdir * _SHADOW_EPS
        st, sprim, _ = cast_rays(pack, sorigin, sdir)
        shadowed[hit] = (sprim >= 0) & (st < dist - 2.0 * _SHADOW_EPS)

    # Projector-space projection of the hit points.
    lit = np.zeros(h * w, dtype=bool)
    proj_pix = np.full((h * w, 2), -1, dtype=np.int32)
    cand = hit & ~shadowed
    if cand.any():
        uv, depth = project_points(points[cand], projector)
        with np.errstate(invalid="ignore"):
            fu = np.floor(uv[:, 0])
            fv = np.floor(uv[:, 1])
        pw, ph = projector.resolution
        ok = (
            (depth > MIN_DEPTH)
            & (fu >= 0) & (fu < pw)
            & (fv >= 0) & (fv < ph)
        )
        idx = np.nonzero(cand)[0][ok]
        lit[idx] = True
        proj_pix[idx, 0] = fu[ok].astype(np.int32)
        proj_pix[idx, 1] = fv[ok].astype(np.int32)

    return CameraView(
        shape=(h, w),
        hit=hit.reshape(h, w),
        point=points.reshape(h, w, 3),
        albedo=albedo.reshape(h, w),
        lit=lit.reshape(h, w),
        shadowed=shadowed.reshape(h, w),
        proj_pix=proj_pix.reshape(h, w, 2),
    )


def shade_view(view: CameraView, frame_pixels: np.ndarray, noise_sigma: float = 0.0,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """Intensity image of one pattern frame for a traced camera view."""
    img = np.full(view.shape, AMBIENT)
    lit = view.lit
    if lit.any():
        px = view.proj_pix[lit, 0]
        py = view.proj_pix[lit, 1]
        high = frame_pixels[py, px] == HI
        img[lit] = view.albedo[lit] * np.where(high, HI_LEVEL, LO_LEVEL) + AMBIENT
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_capture(scene: Scene, cam: CameraModel, projector: CameraModel, frame,
                   noise_sigma: float = 0.0, rng: np.random.Generator | None = None,
                   pack: ScenePack | None = None) -> np.ndarray:
    """Render one pattern frame as captured by one camera.

    ``frame`` is a PatternFrame or a (res_y, res_x) uint8 array. For a whole
    sequence prefer simulate_acquisition, which traces the static geometry
    once per camera.
    """
    pixels = getattr(frame, "pixels", frame)
    view = trace_view(scene, cam, projector, pack=pack)
    return shade_view(view, pixels, noise_sigma=noise_sigma, rng=rng)


def ground_truth_from_view(view: CameraView) -> CameraTruth:
    flags = np.zeros(view.shape, dtype=np.uint8)
    flags[view.hit] |= FLAG_HIT
    flags[view.shadowed] |= FLAG_SHADOW
    return CameraTruth(point=view.point.copy(), proj=view.proj_pix.copy(), flags=flags)


def simulate_acquisition(scene: Scene, rig: Rig, sequence: PatternSequence,
                         noise_sigma: float = 0.0, seed: int = 0
                         ) -> tuple[AcquisitionSet, GroundTruth]:
    """Render the full pattern sequence for every rig camera.

    Deterministic: identical scene, rig, sequence, noise_sigma and seed give a
    bit-identical acquisition regardless of SLS_THREADS.
    """
    if len(rig.cameras) < 2:
        raise InvalidRigError(f"need at least 2 cameras, got {len(rig.cameras)}")
    if noise_sigma < 0:
        raise InvalidArgumentError("noise_sigma must be >= 0")
    spec = sequence.spec
    if (spec.res_x, spec.res_y) != tuple(rig.projector.resolution):
        raise InvalidArgumentError(
            f"pattern resolution {spec.res_x}x{spec.res_y} does not match "
            f"projector resolution {rig.projector.resolution[0]}x{rig.projector.resolution[1]}"
        )

    pack = scene.pack()
    views = [trace_view(scene, cam, rig.projector, pack=pack) for cam in rig.cameras]
    truth = GroundTruth(cameras=[ground_truth_from_view(v) for v in views])

    frames = [f.pixels for f in sequence.frames]
    n_frames = len(frames)
    stacks = [
        np.empty((n_frames, cam.resolution[1], cam.resolution[0]), dtype=np.uint8)
        for cam in rig.cameras
    ]

    def shade_one(ci: int, fi: int) -> None:
        rng = np.random.default_rng((seed, ci, fi)) if noise_sigma > 0 else None
        stacks[ci][fi] = shade_view(views[ci], frames[fi], noise_sigma, rng)

    jobs = [(ci, fi) for ci in range(len(rig.cameras)) for fi in range(n_frames)]
    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda jf: shade_one(*jf), jobs))
    else:
        for ci, fi in jobs:
            shade_one(ci, fi)

    meta = AcquisitionMeta(sequence=spec, noise_sigma=float(noise_sigma), seed=int(seed))
    return AcquisitionSet(stacks=stacks, rig=rig, meta=meta), truth
