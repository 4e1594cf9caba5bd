"""Surface meshing of a projector-indexed point cloud.

The projector pixel grid gives the cloud its connectivity for free: four
reconstructed neighbors (x, y), (x+1, y), (x, y+1), (x+1, y+1) span one cell,
emitted either as a quad or as two triangles. Faces are wound counterclockwise
as seen from the projector. A cell with any two corners further apart than
edge_max is skipped, so depth discontinuities do not get bridged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .reconstruct import GridCloud

log = logging.getLogger(__name__)

MODES = ("quad", "tri")
EDGE_MAX_FACTOR = 10.0


@dataclass
class GridMesh:
    vertices: np.ndarray  # (N, 3), same order as the source cloud points
    faces: np.ndarray  # (M, 4) quad or (M, 3) tri vertex indices, CCW from projector
    mode: str
    color: np.ndarray | None = None  # (N, 3) uint8 vertex color


def neighbor_edge_lengths(cloud: GridCloud) -> np.ndarray:
    """Distances between horizontally and vertically adjacent cloud points."""
    grid = cloud.grid_index()
    pts = cloud.points
    out = []
    for a, b in ((grid[:, :-1], grid[:, 1:]), (grid[:-1, :], grid[1:, :])):
        both = (a >= 0) & (b >= 0)
        if both.any():
            out.append(np.linalg.norm(pts[a[both]] - pts[b[both]], axis=1))
    if not out:
        return np.zeros(0)
    return np.concatenate(out)


def default_edge_max(cloud: GridCloud) -> float:
    """10x the median distance between grid-adjacent points."""
    edges = neighbor_edge_lengths(cloud)
    if edges.size == 0:
        return 0.0
    return EDGE_MAX_FACTOR * float(np.median(edges))


def grid_mesh(cloud: GridCloud, mode: str = "quad", edge_max: float | None = None,
              diagonal: str = "fixed") -> GridMesh:
    """Mesh a grid cloud.

    Args:
        cloud: projector-indexed points.
        mode: "quad" for one face per cell, "tri" for two.
        edge_max: cell guard distance (mm); cells with any two corners further
            apart are dropped. Defaults to 10x the median grid-neighbor edge.
        diagonal: triangle split, "fixed" for the (x, y)-(x+1, y+1) diagonal or
            "shortest" to pick the shorter one per cell.
    """
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    if diagonal not in ("fixed", "shortest"):
        raise InvalidArgumentError(f"diagonal must be 'fixed' or 'shortest', got {diagonal!r}")
    face_width = 4 if mode == "quad" else 3
    if len(cloud) == 0:
        return GridMesh(
            vertices=np.zeros((0, 3)),
            faces=np.zeros((0, face_width), dtype=np.int32),
            mode=mode,
            color=None if cloud.color is None else np.zeros((0, 3), dtype=np.uint8),
        )
    if edge_max is None:
        edge_max = default_edge_max(cloud)
        log.debug("edge_max defaulted to %.6g mm", edge_max)

    grid = cloud.grid_index()
    # corner indices per cell, -1 padded at the right/bottom rim
    a = grid[:-1, :-1]  # (x, y)
    b = grid[1:, :-1]   # (x, y+1)
    c = grid[1:, 1:]    # (x+1, y+1)
    d = grid[:-1, 1:]   # (x+1, y)
    full = (a >= 0) & (b >= 0) & (c >= 0) & (d >= 0)
    ai, bi, ci, di = (m[full] for m in (a, b, c, d))

    pts = cloud.points
    corners = (pts[ai], pts[bi], pts[ci], pts[di])
    keep = np.ones(ai.shape[0], dtype=bool)
    for i in range(4):
        for j in range(i + 1, 4):
            keep &= np.linalg.norm(corners[i] - corners[j], axis=1) <= edge_max
    ai, bi, ci, di = ai[keep], bi[keep], ci[keep], di[keep]

    if mode == "quad":
        faces = np.stack([ai, bi, ci, di], axis=-1).astype(np.int32)
    else:
        if diagonal == "fixed":
            first = np.stack([ai, bi, ci], axis=-1)
            second = np.stack([ai, ci, di], axis=-1)
        else:
            main_diag = np.linalg.norm(pts[ai] - pts[ci], axis=1)
            anti_diag = np.linalg.norm(pts[bi] - pts[di], axis=1)
            use_main = main_diag <= anti_diag
            first = np.where(
                use_main[:, None], np.stack([ai, bi, ci], axis=-1),
                np.stack([ai, bi, di], axis=-1),
            )
            second = np.where(
                use_main[:, None], np.stack([ai, ci, di], axis=-1),
                np.stack([bi, ci, di], axis=-1),
            )
        faces = np.empty((first.shape[0] * 2, 3), dtype=np.int32)
        faces[0::2] = first
        faces[1::2] = second

    return GridMesh(vertices=pts.copy(), faces=faces, mode=mode, color=None if cloud.color is None else cloud.color.copy())
