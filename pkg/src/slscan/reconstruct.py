"""Triangulation of decoded correspondences into a projector-indexed cloud.

Two corresponding pixel rays rarely meet; the reconstructed point is the
midpoint of their closest-approach segment. With more than one camera pixel
per projector pixel, every cross-camera pair is intersected and the surviving
midpoints are averaged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _kernels
from .camera import Ray, Rig, pixel_rays
from .decode import CorrespondenceMap
from .errors import InvalidArgumentError, NearParallelError

log = logging.getLogger(__name__)

DENOM_EPS = 1e-12
GAP_MAX_FACTOR = 5.0
# Exact synthetic scans have pure float-noise gaps; an unfloored multiple of
# their median would filter by rounding luck.
GAP_MAX_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class Intersection:
    """Closest-approach midpoint of two rays."""

    point: np.ndarray  # (3,)
    gap: float  # distance between the two closest points
    s: float  # parameter along the first ray
    t: float  # parameter along the second ray


def intersect_rays(a: Ray, b: Ray) -> Intersection:
    """Midpoint intersection of two rays; near-parallel pairs raise."""
    mid, gap, s, t, ok = _kernels.intersect_pairs(
        a.origin[None, :], a.direction[None, :],
        b.origin[None, :], b.direction[None, :],
        DENOM_EPS,
    )
    if not ok[0]:
        raise NearParallelError("rays are too close to parallel to intersect")
    return Intersection(point=mid[0], gap=float(gap[0]), s=float(s[0]), t=float(t[0]))


def triangulate_group(pixel_lists, rig: Rig, gap_max: float) -> tuple[np.ndarray | None, int]:
    """Triangulate one projector pixel from its per-camera pixel lists.

    Intersects every cross-camera pixel pair, drops near-parallel pairs and
    pairs whose closest-approach gap exceeds gap_max, and averages the rest.

    Returns (point, pairs_used); point is None when every pair was discarded.
    """
    if len(pixel_lists) != len(rig.cameras):
        raise InvalidArgumentError("one pixel list per rig camera required")
    mids = []
    for ci, cj in combinations(range(len(rig.cameras)), 2):
        pi = np.asarray(pixel_lists[ci], dtype=np.float64).reshape(-1, 2)
        pj = np.asarray(pixel_lists[cj], dtype=np.float64).reshape(-1, 2)
        oi, di = pixel_rays(pi, rig.cameras[ci])
        oj, dj = pixel_rays(pj, rig.cameras[cj])
        ii, jj = np.meshgrid(np.arange(pi.shape[0]), np.arange(pj.shape[0]), indexing="ij")
        ii = ii.reshape(-1)
        jj = jj.reshape(-1)
        mid, gap, _, _, ok = _kernels.intersect_pairs(
            np.broadcast_to(oi, (ii.size, 3)), di[ii],
            np.broadcast_to(oj, (ii.size, 3)), dj[jj],
            DENOM_EPS,
        )
        keep = ok & (gap <= gap_max)
        if keep.any():
            mids.append(mid[keep])
    if not mids:
        return None, 0
    all_mids = np.concatenate(mids)
    return all_mids.mean(axis=0), all_mids.shape[0]


@dataclass
class GridCloud:
    """Point cloud indexed by projector pixel."""

    resolution: tuple[int, int]
    keys: np.ndarray  # (N, 2) int32 projector (x, y), sorted by (y, x)
    points: np.ndarray  # (N, 3) float64 world mm
    support: np.ndarray  # (N,) int32 surviving pair count per point
    color: np.ndarray | None = None  # (N, 3) uint8, white-frame shade on all channels

    def __len__(self) -> int:
        return self.keys.shape[0]

    def grid_index(self) -> np.ndarray:
        """(res_y, res_x) int32 lookup grid of point indices, -1 where empty."""
        w, h = self.resolution
        grid = np.full((h, w), -1, dtype=np.int32)
        if len(self):
            grid[self.keys[:, 1], self.keys[:, 0]] = np.arange(len(self), dtype=np.int32)
        return grid


@dataclass
class ReconStats:
    keys_in: int
    points_out: int
    keys_dropped: int
    pairs_total: int
    pairs_used: int
    gap_max: float
    gap_median: float


def _pair_table(corrs: CorrespondenceMap):
    """Flatten all cross-camera pixel pairs into per-camera-pair index arrays."""
    n_cams = corrs.n_cameras
    tables = []
    keys = sorted(corrs.entries, key=lambda k: (k[1], k[0]))
    for ci, cj in combinations(range(n_cams), 2):
        pix_i, pix_j, key_idx = [], [], []
        for ki, key in enumerate(keys):
            entry = corrs.entries[key]
            a = entry[ci]
            b = entry[cj]
            ii, jj = np.meshgrid(np.arange(a.shape[0]), np.arange(b.shape[0]), indexing="ij")
            pix_i.append(a[ii.reshape(-1)])
            pix_j.append(b[jj.reshape(-1)])
            key_idx.append(np.full(ii.size, ki, dtype=np.int64))
        if pix_i:
            tables.append(
                (
                    ci,
                    cj,
                    np.concatenate(pix_i),
                    np.concatenate(pix_j),
                    np.concatenate(key_idx),
                )
            )
    return keys, tables


def reconstruct_cloud(corrs: CorrespondenceMap, rig: Rig, gap_max: float | None = None,
                      white_images=None) -> tuple[GridCloud, ReconStats]:
    """Triangulate every correspondence entry into a grid-indexed cloud.

    Args:
        corrs: correspondence map over >= 2 cameras.
        rig: the acquiring rig (camera order matches the map).
        gap_max: discard pair intersections with a closest-approach gap above
            this (mm). Default: 5x the median gap over all valid pairs,
            floored at 1e-6 mm. Pass an explicit value (0 included) to filter
            literally.
        white_images: optional per-camera white-frame captures; when given,
            each point gets the mean white shade of its contributing pixels.

    Returns:
        (cloud, stats). Projector pixels whose pairs were all discarded are
        dropped and counted in stats.keys_dropped.
    """
    if corrs.n_cameras != len(rig.cameras):
        raise InvalidArgumentError(
            f"correspondences cover {corrs.n_cameras} cameras, rig has {len(rig.cameras)}"
        )
    keys, tables = _pair_table(corrs)
    n_keys = len(keys)
    if n_keys == 0:
        empty = GridCloud(
            resolution=corrs.resolution,
            keys=np.zeros((0, 2), dtype=np.int32),
            points=np.zeros((0, 3)),
            support=np.zeros(0, dtype=np.int32),
            color=None if white_images is None else np.zeros((0, 3), dtype=np.uint8),
        )
        return empty, ReconStats(0, 0, 0, 0, 0, 0.0, 0.0)

    sums = np.zeros((n_keys, 3))
    counts = np.zeros(n_keys, dtype=np.int64)
    all_gaps = []
    results = []
    pairs_total = 0
    for ci, cj, pix_i, pix_j, key_idx in tables:
        oi, di = pixel_rays(pix_i.astype(np.float64), rig.cameras[ci])
        oj, dj = pixel_rays(pix_j.astype(np.float64), rig.cameras[cj])
        mid, gap, _, _, ok = _kernels.intersect_pairs(
            np.broadcast_to(oi, di.shape).copy(), di,
            np.broadcast_to(oj, dj.shape).copy(), dj,
            DENOM_EPS,
        )
        pairs_total += key_idx.size
        results.append((key_idx, mid, gap, ok))
        if ok.any():
            all_gaps.append(gap[ok])

    gap_median = float(np.median(np.concatenate(all_gaps))) if all_gaps else 0.0
    if gap_max is None:
        gap_max = max(GAP_MAX_FACTOR * gap_median, GAP_MAX_FLOOR)
        log.debug("gap_max defaulted to %.6g mm (median %.6g)", gap_max, gap_median)

    pairs_used = 0
    for key_idx, mid, gap, ok in results:
        keep = ok & (gap <= gap_max)
        if keep.any():
            np.add.at(sums, key_idx[keep], mid[keep])
            np.add.at(counts, key_idx[keep], 1)
            pairs_used += int(keep.sum())

    kept = counts > 0
    kept_idx = np.nonzero(kept)[0]
    points = sums[kept] / counts[kept, None]
    out_keys = np.array([keys[i] for i in kept_idx], dtype=np.int32).reshape(-1, 2)

    color = None
    if white_images is not None:
        if len(white_images) != corrs.n_cameras:
            raise InvalidArgumentError("one white image per camera required")
        color = np.zeros((len(kept_idx), 3), dtype=np.uint8)
        for row, i in enumerate(kept_idx):
            entry = corrs.entries[keys[i]]
            shades = [
                white_images[c][entry[c][:, 1], entry[c][:, 0]].astype(np.float64)
                for c in range(corrs.n_cameras)
            ]
            color[row] = np.uint8(round(float(np.concatenate(shades).mean())))

    cloud = GridCloud(
        resolution=corrs.resolution,
        keys=out_keys,
        points=points,
        support=counts[kept].astype(np.int32),
        color=color,
    )
    stats = ReconStats(
        keys_in=n_keys,
        points_out=int(kept.sum()),
        keys_dropped=int(n_keys - kept.sum()),
        pairs_total=pairs_total,
        pairs_used=pairs_used,
        gap_max=float(gap_max),
        gap_median=gap_median,
    )
    if stats.keys_dropped:
        log.info("dropped %d projector pixels with no surviving ray pair", stats.keys_dropped)
    return cloud, stats
