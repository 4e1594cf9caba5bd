"""Scene geometry for the acquisition simulator.

A scene is a list of matte primitives: bounded rectangles, oriented boxes and
triangle meshes, each with a uniform albedo in [0, 1]. Ray queries run through
the kernel backend (compiled or numpy lane, see slscan._kernels).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .camera import Ray
from .errors import FormatError, InvalidArgumentError

SCENE_SCHEMA = "slscan-scene@1"
T_MIN = 1e-9


def _unit(v, what):
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise InvalidArgumentError(f"{what} must be a nonzero vector")
    return v / n


def _check_albedo(a):
    if not 0.0 <= a <= 1.0:
        raise InvalidArgumentError(f"albedo must be in [0, 1], got {a}")
    return float(a)


@dataclass(frozen=True, eq=False)
class RectPlane:
    """Bounded rectangle: center point, unit normal, in-plane u axis, extents."""

    point: np.ndarray
    normal: np.ndarray
    extent: tuple[float, float]  # full side lengths along u and v
    u_axis: np.ndarray | None = None
    albedo: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64).reshape(3))
        n = _unit(self.normal, "plane normal")
        object.__setattr__(self, "normal", n)
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise InvalidArgumentError("plane extent must be positive")
        if self.u_axis is None:
            # pick the world axis least aligned with the normal
            seed = np.zeros(3)
            seed[int(np.argmin(np.abs(n)))] = 1.0
        else:
            seed = np.asarray(self.u_axis, dtype=np.float64).reshape(3)
        u = seed - (seed @ n) * n
        object.__setattr__(self, "u_axis", _unit(u, "plane u axis"))
        object.__setattr__(self, "albedo", _check_albedo(self.albedo))

    @property
    def v_axis(self) -> np.ndarray:
        return np.cross(self.normal, self.u_axis)


@dataclass(frozen=True, eq=False)
class Box:
    """Oriented box: center, per-axis half extents, world-from-local rotation."""

    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray | None = None
    albedo: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        h = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if (h <= 0).any():
            raise InvalidArgumentError("box half extents must be positive")
        object.__setattr__(self, "half_extents", h)
        r = np.eye(3) if self.rotation is None else np.asarray(
            self.rotation, dtype=np.float64).reshape(3, 3)
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise InvalidArgumentError("box rotation is not a rotation matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "albedo", _check_albedo(self.albedo))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle soup."""

    vertices: np.ndarray
    faces: np.ndarray
    albedo: float = 0.9

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise InvalidArgumentError("mesh face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "albedo", _check_albedo(self.albedo))


@dataclass
class ScenePack:
    """Scene flattened to kernel-ready arrays."""

    plane_point: np.ndarray
    plane_normal: np.ndarray
    plane_u: np.ndarray
    plane_v: np.ndarray
    plane_half: np.ndarray
    box_center: np.ndarray
    box_rot: np.ndarray
    box_half: np.ndarray
    tri_v0: np.ndarray
    tri_v1: np.ndarray
    tri_v2: np.ndarray
    geom_owner: np.ndarray  # (G,) primitive index per geometry element
    geom_albedo: np.ndarray  # (G,)


@dataclass
class Scene:
    primitives: list = field(default_factory=list)

    def pack(self) -> ScenePack:
        planes, boxes, tris = [], [], []
        plane_own, box_own, tri_own = [], [], []
        for idx, prim in enumerate(self.primitives):
            if isinstance(prim, RectPlane):
                planes.append(prim)
                plane_own.append(idx)
            elif isinstance(prim, Box):
                boxes.append(prim)
                box_own.append(idx)
            elif isinstance(prim, TriMesh):
                tris.append(prim)
                tri_own.extend([idx] * prim.faces.shape[0])
            else:
                raise InvalidArgumentError(f"unsupported primitive {type(prim).__name__}")

        def rows(items, get, width):
            if not items:
                return np.zeros((0, width))
            return np.array([get(p) for p in items], dtype=np.float64)

        tri_v0 = np.zeros((0, 3))
        tri_v1 = np.zeros((0, 3))
        tri_v2 = np.zeros((0, 3))
        if tris:
            tri_v0 = np.concatenate([m.vertices[m.faces[:, 0]] for m in tris])
            tri_v1 = np.concatenate([m.vertices[m.faces[:, 1]] for m in tris])
            tri_v2 = np.concatenate([m.vertices[m.faces[:, 2]] for m in tris])

        owner = np.array(plane_own + box_own + tri_own, dtype=np.int32)
        albedo = np.array([self.primitives[i].albedo for i in owner], dtype=np.float64)
        box_rot = (
            np.stack([b.rotation for b in boxes]) if boxes else np.zeros((0, 3, 3))
        )
        return ScenePack(
            plane_point=rows(planes, lambda p: p.point, 3),
            plane_normal=rows(planes, lambda p: p.normal, 3),
            plane_u=rows(planes, lambda p: p.u_axis, 3),
            plane_v=rows(planes, lambda p: p.v_axis, 3),
            plane_half=rows(planes, lambda p: (p.extent[0] / 2.0, p.extent[1] / 2.0), 2),
            box_center=rows(boxes, lambda b: b.center, 3),
            box_rot=box_rot,
            box_half=rows(boxes, lambda b: b.half_extents, 3),
            tri_v0=tri_v0,
            tri_v1=tri_v1,
            tri_v2=tri_v2,
            geom_owner=owner,
            geom_albedo=albedo,
        )


@dataclass(frozen=True, eq=False)
class Hit:
    point: np.ndarray
    normal: np.ndarray
    primitive: int
    t: float


def cast_rays(pack: ScenePack, origins, dirs, t_min: float = T_MIN):
    """Nearest hits for a batch of rays.

    Returns (t, prim, normal): ray parameters (inf for miss), owning primitive
    indices (-1 for miss) and surface normals facing the rays.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    t, geom, normal = _kernels.raycast(
        origins,
        dirs,
        pack.plane_point,
        pack.plane_normal,
        pack.plane_u,
        pack.plane_v,
        pack.plane_half,
        pack.box_center,
        pack.box_rot,
        pack.box_half,
        pack.tri_v0,
        pack.tri_v1,
        pack.tri_v2,
        t_min,
    )
    prim = np.where(geom >= 0, pack.geom_owner[np.clip(geom, 0, None)], -1).astype(np.int32)
    return t, prim, normal


def cast_ray(scene: Scene, ray: Ray, t_min: float = T_MIN) -> Hit | None:
    """Closest scene intersection of one ray, or None."""
    pack = scene.pack() if isinstance(scene, Scene) else scene
    t, prim, normal = cast_rays(pack, ray.origin[None, :], ray.direction[None, :], t_min)
    if prim[0] < 0:
        return None
    return Hit(
        point=ray.origin + t[0] * ray.direction,
        normal=normal[0],
        primitive=int(prim[0]),
        t=float(t[0]),
    )


# -- scene files --------------------------------------------------------------

def save_scene(scene: Scene, path) -> None:
    prims = []
    for p in scene.primitives:
        if isinstance(p, RectPlane):
            prims.append(
                {
                    "type": "plane",
                    "point": list(map(float, p.point)),
                    "normal": list(map(float, p.normal)),
                    "u_axis": list(map(float, p.u_axis)),
                    "extent": [float(p.extent[0]), float(p.extent[1])],
                    "albedo": p.albedo,
                }
            )
        elif isinstance(p, Box):
            prims.append(
                {
                    "type": "box",
                    "center": list(map(float, p.center)),
                    "half_extents": list(map(float, p.half_extents)),
                    "rotation": [float(x) for x in p.rotation.reshape(9)],
                    "albedo": p.albedo,
                }
            )
        elif isinstance(p, TriMesh):
            prims.append(
                {
                    "type": "mesh",
                    "vertices": [[float(x) for x in row] for row in p.vertices],
                    "faces": [[int(x) for x in row] for row in p.faces],
                    "albedo": p.albedo,
                }
            )
    doc = {"schema": SCENE_SCHEMA, "primitives": prims}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_scene(path) -> Scene:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"scene file is not valid JSON: {exc}") from exc
    if doc.get("schema") != SCENE_SCHEMA:
        raise FormatError(f"unexpected scene schema {doc.get('schema')!r}")
    prims = []
    for i, rec in enumerate(doc.get("primitives", [])):
        kind = rec.get("type")
        try:
            if kind == "plane":
                prims.append(
                    RectPlane(
                        point=rec["point"],
                        normal=rec["normal"],
                        extent=tuple(rec["extent"]),
                        u_axis=rec.get("u_axis"),
                        albedo=rec.get("albedo", 0.9),
                    )
                )
            elif kind == "box":
                rot = rec.get("rotation")
                prims.append(
                    Box(
                        center=rec["center"],
                        half_extents=rec["half_extents"],
                        rotation=None if rot is None else np.array(rot),
                        albedo=rec.get("albedo", 0.9),
                    )
                )
            elif kind == "mesh":
                prims.append(
                    TriMesh(
                        vertices=np.array(rec["vertices"]),
                        faces=np.array(rec["faces"]),
                        albedo=rec.get("albedo", 0.9),
                    )
                )
            else:
                raise FormatError(f"primitive {i}: unknown type {kind!r}")
        except KeyError as exc:
            raise FormatError(f"primitive {i}: missing field {exc}") from exc
    return Scene(primitives=prims)
