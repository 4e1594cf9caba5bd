"""Ray casting and scene file tests."""

import numpy as np
import pytest

from slscan.camera import Ray, rodrigues
from slscan.errors import FormatError, InvalidArgumentError
from slscan.scene import (
    Box,
    RectPlane,
    Scene,
    TriMesh,
    cast_ray,
    cast_rays,
    load_scene,
    save_scene,
)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def test_plane_axis_aligned_hit():
    scene = Scene([RectPlane(point=(0, 0, 100), normal=(0, 0, -1), extent=(50, 50))])
    hit = cast_ray(scene, Ray((0, 0, 0), (0, 0, 1)))
    assert hit is not None
    assert np.allclose(hit.point, (0, 0, 100))
    assert hit.t == pytest.approx(100.0)
    assert abs(hit.normal @ np.array([0.0, 0.0, 1.0])) == pytest.approx(1.0)


def test_plane_parallel_ray_misses():
    scene = Scene([RectPlane(point=(0, 0, 100), normal=(0, 0, -1), extent=(50, 50))])
    assert cast_ray(scene, Ray((0, 0, 0), (1, 0, 0))) is None


def test_plane_extent_bounds():
    scene = Scene([RectPlane(point=(0, 0, 100), normal=(0, 0, -1), extent=(50, 50))])
    # extent is the full side length, so the rectangle spans +-25.
    assert cast_ray(scene, Ray((24.9, 0, 0), (0, 0, 1))) is not None
    assert cast_ray(scene, Ray((25.1, 0, 0), (0, 0, 1))) is None


def test_box_face_hit():
    scene = Scene([Box(center=(0, 0, 50), half_extents=(10, 10, 10))])
    hit = cast_ray(scene, Ray((0, 0, 0), (0, 0, 1)))
    assert hit is not None
    assert hit.t == pytest.approx(40.0)
    assert np.allclose(hit.point, (0, 0, 40))
    assert np.allclose(hit.normal, (0, 0, -1))
    assert cast_ray(scene, Ray((0, 20, 0), (0, 0, 1))) is None


def test_rotated_box():
    r = rodrigues((0.0, 0.0, np.radians(45.0)))
    scene = Scene([Box(center=(0, 0, 50), half_extents=(10, 10, 10), rotation=r)])
    hit = cast_ray(scene, Ray((0, 0, 0), (0, 0, 1)))
    assert hit is not None
    assert hit.t == pytest.approx(40.0)
    # A 45 degree spin widens the silhouette to the diagonal.
    assert cast_ray(scene, Ray((13.0, 0, 0), (0, 0, 1))) is not None
    assert cast_ray(scene, Ray((14.5, 0, 0), (0, 0, 1))) is None


def test_triangle_hit_and_miss():
    tri = TriMesh(vertices=np.array([[0.0, -10.0, 30.0], [10.0, 10.0, 30.0],
                                     [-10.0, 10.0, 30.0]]),
                  faces=np.array([[0, 1, 2]]))
    scene = Scene([tri])
    hit = cast_ray(scene, Ray((0, 0, 0), (0, 0, 1)))
    assert hit is not None
    assert hit.t == pytest.approx(30.0)
    assert cast_ray(scene, Ray((30, 0, 0), (0, 0, 1))) is None
    # Triangles are double sided: approaching from behind still hits.
    assert cast_ray(scene, Ray((0, 0, 60), (0, 0, -1))) is not None


def test_nearest_primitive_wins():
    scene = Scene([
        RectPlane(point=(0, 0, 100), normal=(0, 0, -1), extent=(200, 200)),
        Box(center=(0, 0, 50), half_extents=(5, 5, 5)),
    ])
    hit = cast_ray(scene, Ray((0, 0, 0), (0, 0, 1)))
    assert hit.primitive == 1
    assert hit.t == pytest.approx(45.0)
    side = cast_ray(scene, Ray((50, 0, 0), (0, 0, 1)))
    assert side.primitive == 0


def test_cast_rays_matches_cast_ray():
    scene = Scene([
        RectPlane(point=(0, 0, 120), normal=unit((0.2, -0.1, -1.0)), extent=(80, 60)),
        Box(center=(20, -10, 60), half_extents=(12, 8, 10),
            rotation=rodrigues((0.3, 0.2, -0.4))),
        TriMesh(vertices=np.array([[-40.0, -30.0, 80.0], [-10.0, -35.0, 85.0],
                                   [-25.0, 0.0, 90.0]]),
                faces=np.array([[0, 1, 2]])),
    ])
    pack = scene.pack()
    rng = np.random.default_rng(21)
    origins = rng.uniform(-5.0, 5.0, size=(300, 3))
    dirs = rng.normal(size=(300, 3))
    dirs[:, 2] = np.abs(dirs[:, 2]) + 0.5
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t, geom, normal = cast_rays(pack, origins, dirs)
    hits = 0
    for i in range(300):
        single = cast_ray(scene, Ray(origins[i], dirs[i]))
        if single is None:
            assert geom[i] == -1
            assert np.isinf(t[i])
        else:
            hits += 1
            assert geom[i] == single.primitive
            assert t[i] == pytest.approx(single.t, abs=1e-9)
            assert np.allclose(normal[i], single.normal, atol=1e-9)
    # The comparison only means something if the rays actually exercise the
    # scene: every primitive must be hit at least once, and some rays must
    # miss everything.
    per_geom = np.unique(geom[geom >= 0])
    assert set(per_geom.tolist()) == {0, 1, 2}
    assert 0 < hits < 300


def test_scene_validation():
    with pytest.raises(InvalidArgumentError):
        RectPlane(point=(0, 0, 0), normal=(0, 0, 0), extent=(1, 1))
    with pytest.raises(InvalidArgumentError):
        RectPlane(point=(0, 0, 0), normal=(0, 0, 1), extent=(0, 1))
    with pytest.raises(InvalidArgumentError):
        Box(center=(0, 0, 0), half_extents=(1, -1, 1))
    with pytest.raises(InvalidArgumentError):
        Box(center=(0, 0, 0), half_extents=(1, 1, 1), rotation=np.eye(3) * 2)
    with pytest.raises(InvalidArgumentError):
        RectPlane(point=(0, 0, 0), normal=(0, 0, 1), extent=(1, 1), albedo=1.5)
    with pytest.raises(InvalidArgumentError):
        TriMesh(vertices=np.zeros((3, 3)), faces=np.array([[0, 1, 5]]))


def test_scene_file_round_trip(tmp_path):
    scene = Scene([
        RectPlane(point=(1, 2, 3), normal=(0, 0, -1), extent=(4, 5), albedo=0.7),
        Box(center=(0, 0, 350), half_extents=(55, 55, 55),
            rotation=rodrigues((0.1, 0.2, 0.3)), albedo=0.5),
        TriMesh(vertices=np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]),
                faces=np.array([[0, 1, 2]]), albedo=0.25),
    ])
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    loaded = load_scene(path)
    assert len(loaded.primitives) == 3
    plane, box, mesh = loaded.primitives
    assert np.allclose(plane.point, (1, 2, 3))
    assert np.allclose(plane.u_axis, scene.primitives[0].u_axis)
    assert plane.albedo == 0.7
    assert np.allclose(box.rotation, scene.primitives[1].rotation)
    assert np.allclose(mesh.vertices, scene.primitives[2].vertices)
    assert np.array_equal(mesh.faces, scene.primitives[2].faces)


def test_scene_file_rejects_unknown_type(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text('{"schema": "slscan-scene@1", "primitives": [{"type": "teapot"}]}\n')
    with pytest.raises(FormatError):
        load_scene(path)
    path.write_text("not json")
    with pytest.raises(FormatError):
        load_scene(path)
