"""Decoding captured frame stacks back into projector coordinates.

Each camera pixel is first validated against the white/black frame pair
(shadow mask), then every stripe bit is classified by comparing the direct
frame against its inverse. The assembled bit strings run through the active
codec to give the projector column and row that lit the pixel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError
from .patterns import SequenceSpec, decode_axis

log = logging.getLogger(__name__)

DEFAULT_SHADOW_THRESHOLD = 40
DEFAULT_MIN_CONTRAST = 10

STATUS_OK = 0
STATUS_SHADOW = 1
STATUS_LOW_CONTRAST = 2
STATUS_OUT_OF_RANGE = 3

STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_SHADOW: "shadow",
    STATUS_LOW_CONTRAST: "low-contrast",
    STATUS_OUT_OF_RANGE: "out-of-range",
}


@dataclass
class ShadowMask:
    """Pixels bright enough under full illumination to be decodable."""

    valid: np.ndarray  # (H, W) bool
    threshold: int


def shadow_mask(white: np.ndarray, black: np.ndarray,
                threshold: int = DEFAULT_SHADOW_THRESHOLD) -> ShadowMask:
    """Mark pixels whose white-minus-black contrast clears the threshold."""
    white = np.asarray(white)
    black = np.asarray(black)
    if white.shape != black.shape:
        raise InvalidArgumentError(
            f"white {white.shape} and black {black.shape} frames differ in size"
        )
    diff = white.astype(np.int16) - black.astype(np.int16)
    return ShadowMask(valid=diff > threshold, threshold=int(threshold))


def classify_bit(direct: int, inverse: int, min_contrast: int = DEFAULT_MIN_CONTRAST):
    """One bit from a direct/inverse sample pair: 1, 0 or None (undecodable)."""
    diff = int(direct) - int(inverse)
    if diff > min_contrast:
        return 1
    if diff < -min_contrast:
        return 0
    return None


@dataclass
class DecodedMap:
    """Per-pixel projector coordinates for one camera."""

    x: np.ndarray  # (H, W) int32 projector column, -1 where not ok
    y: np.ndarray  # (H, W) int32 projector row, -1 where not ok
    status: np.ndarray  # (H, W) uint8 STATUS_* codes
    spec: SequenceSpec

    @property
    def ok(self) -> np.ndarray:
        return self.status == STATUS_OK


def decode_map(stack: np.ndarray, spec: SequenceSpec, mask: ShadowMask | None = None,
               min_contrast: int = DEFAULT_MIN_CONTRAST) -> DecodedMap:
    """Decode a full frame stack for one camera.

    Args:
        stack: (F, H, W) uint8 captures in projection order.
        spec: frame layout and codec of the projected sequence.
        mask: shadow mask; computed from the stack's own white/black frames
            with the default threshold when omitted.
        min_contrast: minimum direct/inverse contrast per stripe bit.
    """
    stack = np.asarray(stack)
    if stack.ndim != 3 or stack.shape[0] != spec.total_frames:
        raise InvalidArgumentError(
            f"stack has {stack.shape[0] if stack.ndim == 3 else '?'} frames, "
            f"sequence needs {spec.total_frames}"
        )
    if mask is None:
        mask = shadow_mask(stack[0], stack[1])
    if mask.valid.shape != stack.shape[1:]:
        raise InvalidArgumentError("shadow mask size does not match the stack")

    col_direct = np.array([spec.col_direct_index(b) for b in range(spec.n_cols)], dtype=np.intp)
    col_inverse = np.array([spec.col_inverse_index(b) for b in range(spec.n_cols)], dtype=np.intp)
    row_direct = np.array([spec.row_direct_index(b) for b in range(spec.n_rows)], dtype=np.intp)
    row_inverse = np.array([spec.row_inverse_index(b) for b in range(spec.n_rows)], dtype=np.intp)

    col_codes, col_bad = _kernels.classify_stack(stack, col_direct, col_inverse, int(min_contrast))
    row_codes, row_bad = _kernels.classify_stack(stack, row_direct, row_inverse, int(min_contrast))

    x = decode_axis(col_codes, spec.scheme).astype(np.int64)
    y = decode_axis(row_codes, spec.scheme).astype(np.int64)

    status = np.full(stack.shape[1:], STATUS_OK, dtype=np.uint8)
    out_of_range = (x >= spec.res_x) | (y >= spec.res_y)
    status[out_of_range] = STATUS_OUT_OF_RANGE
    status[col_bad | row_bad] = STATUS_LOW_CONTRAST
    status[~mask.valid] = STATUS_SHADOW

    ok = status == STATUS_OK
    return DecodedMap(
        x=np.where(ok, x, -1).astype(np.int32),
        y=np.where(ok, y, -1).astype(np.int32),
        status=status,
        spec=spec,
    )


@dataclass
class CorrespondenceMap:
    """Projector pixel -> camera pixels per camera, for all cameras at once.

    entries maps (proj_x, proj_y) to one (n_i, 2) int32 array of camera (x, y)
    pixels per camera; every listed camera has at least one pixel.
    """

    resolution: tuple[int, int]
    n_cameras: int
    entries: dict[tuple[int, int], list[np.ndarray]]


def _keyed_pixels(dmap: DecodedMap) -> dict[int, np.ndarray]:
    """Group a camera's ok pixels by flattened projector key."""
    ok = dmap.ok
    ys, xs = np.nonzero(ok)
    if ys.size == 0:
        return {}
    keys = dmap.y[ys, xs].astype(np.int64) * dmap.spec.res_x + dmap.x[ys, xs]
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    pix = np.stack([xs[order], ys[order]], axis=-1).astype(np.int32)
    uniq, starts = np.unique(keys, return_index=True)
    bounds = np.append(starts, keys.size)
    return {int(k): pix[a:b] for k, a, b in zip(uniq, bounds[:-1], bounds[1:])}


def build_correspondences(maps: list[DecodedMap]) -> CorrespondenceMap:
    """Intersect per-camera decoded maps into a many-to-many correspondence map.

    Only projector pixels decoded by every camera are kept: surface parts seen
    by a strict subset of the cameras cannot be triangulated consistently.
    """
    if len(maps) < 2:
        raise InvalidArgumentError(f"need at least 2 decoded maps, got {len(maps)}")
    spec0 = maps[0].spec
    for m in maps[1:]:
        if (m.spec.res_x, m.spec.res_y) != (spec0.res_x, spec0.res_y):
            raise InvalidArgumentError("decoded maps disagree on projector resolution")

    grouped = [_keyed_pixels(m) for m in maps]
    shared = set(grouped[0])
    for g in grouped[1:]:
        shared &= set(g)

    entries: dict[tuple[int, int], list[np.ndarray]] = {}
    for key in sorted(shared):  # flattened y*res_x + x, so this is (y, x) order
        kx = int(key % spec0.res_x)
        ky = int(key // spec0.res_x)
        entries[(kx, ky)] = [g[key] for g in grouped]
    log.debug("correspondences: %d shared projector pixels", len(entries))
    return CorrespondenceMap(
        resolution=(spec0.res_x, spec0.res_y), n_cameras=len(maps), entries=entries
    )
