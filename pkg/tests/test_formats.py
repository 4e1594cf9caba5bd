"""File format tests: images, manifests, binary tables and mesh files."""

import numpy as np
import pytest

from slscan.decode import CorrespondenceMap, build_correspondences, decode_map
from slscan.errors import FormatError
from slscan.formats import (
    frame_filename,
    ground_truth_bytes,
    load_acquisition,
    load_cloud,
    load_decoded,
    load_mesh,
    load_patterns,
    read_correspondences,
    read_ground_truth,
    read_json,
    read_pgm,
    save_acquisition,
    save_cloud,
    save_decoded,
    save_mesh,
    save_patterns,
    write_correspondences,
    write_json,
    write_pgm,
)
from slscan.meshing import GridMesh, grid_mesh
from slscan.patterns import generate_sequence
from slscan.reconstruct import GridCloud


def test_write_json_is_stable(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    write_json(a, {"zebra": 1, "apple": [1, 2]})
    write_json(b, {"apple": [1, 2], "zebra": 1})
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().endswith(b"\n")
    assert read_json(a) == {"zebra": 1, "apple": [1, 2]}


def test_pgm_round_trip_8bit(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(33, 47), dtype=np.uint8)
    path = tmp_path / "img.pgm"
    write_pgm(path, img)
    back = read_pgm(path)
    assert back.dtype == np.uint8
    assert np.array_equal(back, img)


def test_pgm_round_trip_16bit(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 65536, size=(12, 9), dtype=np.uint16)
    img[0, 0] = 65535
    path = tmp_path / "img16.pgm"
    write_pgm(path, img)
    back = read_pgm(path)
    assert back.dtype == np.uint16
    assert np.array_equal(back, img)


def test_pgm_accepts_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment line\n2 2\n255\n\x01\x02\x03\x04")
    img = read_pgm(path)
    assert np.array_equal(img, [[1, 2], [3, 4]])


def test_pgm_rejects_damage(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P6\n2 2\n255\n\x01\x02\x03\x04")
    with pytest.raises(FormatError):
        read_pgm(path)
    path.write_bytes(b"P5\n2 2\n255\n\x01\x02")
    with pytest.raises(FormatError):
        read_pgm(path)


def test_frame_filename():
    assert frame_filename(0, "white") == "pat_00_white.pgm"
    assert frame_filename(11, "col04_inv") == "pat_11_col04_inv.pgm"


def test_patterns_round_trip(tmp_path):
    seq = generate_sequence(8, 8)
    out = tmp_path / "patterns"
    save_patterns(seq, out)
    files = sorted(p.name for p in out.glob("*.pgm"))
    assert len(files) == 14
    assert files[0] == "pat_00_white.pgm"
    loaded = load_patterns(out)
    assert loaded.spec == seq.spec
    for a, b in zip(loaded.frames, seq.frames):
        assert a.role == b.role
        assert np.array_equal(a.pixels, b.pixels)


def test_ground_truth_binary_round_trip(plane_products, tmp_path):
    truth = plane_products.truth.cameras[0]
    blob = ground_truth_bytes(truth)
    assert len(blob) == 256 * 256 * 33
    path = tmp_path / "gt.bin"
    path.write_bytes(blob)
    back = read_ground_truth(path, resolution=(256, 256))
    assert np.array_equal(back.flags, truth.flags)
    assert np.array_equal(back.proj, truth.proj)
    nan_mask = np.isnan(truth.point)
    assert np.array_equal(np.isnan(back.point), nan_mask)
    assert np.array_equal(back.point[~nan_mask], truth.point[~nan_mask])


def test_acquisition_round_trip(plane_products, tmp_path):
    out = tmp_path / "acq"
    save_acquisition(plane_products.acq, plane_products.truth, out)
    assert (out / "manifest.json").exists()
    assert (out / "rig.json").exists()
    acq, truth = load_acquisition(out)
    assert len(acq.stacks) == 2
    for a, b in zip(acq.stacks, plane_products.acq.stacks):
        assert np.array_equal(a, b)
    assert acq.meta.sequence == plane_products.acq.meta.sequence
    assert acq.meta.noise_sigma == 0.0
    assert truth is not None
    for a, b in zip(truth.cameras, plane_products.truth.cameras):
        assert np.array_equal(a.flags, b.flags)
        assert np.array_equal(a.proj, b.proj)
    loaded_cam = acq.rig.cameras[0]
    want = plane_products.acq.rig.cameras[0]
    assert loaded_cam.intrinsics == want.intrinsics
    assert np.allclose(loaded_cam.pose.T, want.pose.T)


def test_acquisition_without_truth(plane_products, tmp_path):
    out = tmp_path / "acq_nt"
    save_acquisition(plane_products.acq, None, out)
    acq, truth = load_acquisition(out)
    assert truth is None
    assert np.array_equal(acq.stacks[1], plane_products.acq.stacks[1])


def test_correspondence_table_round_trip(tmp_path):
    entries = {
        (5, 7): [np.array([[0, 0]], dtype=np.int32),
                 np.array([[1, 1], [2, 1]], dtype=np.int32)],
        (0, 2): [np.array([[3, 4]], dtype=np.int32),
                 np.array([[5, 6]], dtype=np.int32)],
    }
    corrs = CorrespondenceMap(resolution=(8, 8), n_cameras=2, entries=entries)
    path = tmp_path / "corr.bin"
    write_correspondences(corrs, path)
    raw = path.read_bytes()
    assert raw[:4] == b"SLCM"
    back = read_correspondences(path)
    assert back.resolution == (8, 8)
    assert back.n_cameras == 2
    assert set(back.entries) == {(5, 7), (0, 2)}
    for key, lists in entries.items():
        for a, b in zip(back.entries[key], lists):
            assert np.array_equal(a, b)
    # Keys are stored row-major by (y, x).
    assert list(back.entries) == [(0, 2), (5, 7)]


def test_correspondence_table_rejects_damage(tmp_path):
    corrs = CorrespondenceMap(
        resolution=(4, 4), n_cameras=2,
        entries={(1, 1): [np.array([[0, 0]], dtype=np.int32),
                          np.array([[1, 0]], dtype=np.int32)]},
    )
    path = tmp_path / "corr.bin"
    write_correspondences(corrs, path)
    raw = bytearray(path.read_bytes())
    raw[0] = ord(b"X")
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_correspondences(bad)
    trailing = tmp_path / "trailing.bin"
    trailing.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        read_correspondences(trailing)
    short = tmp_path / "short.bin"
    short.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(FormatError):
        read_correspondences(short)


def test_decoded_round_trip(plane_products, tmp_path):
    out = tmp_path / "dec"
    save_decoded(plane_products.maps, plane_products.corrs, out,
                 shadow_threshold=40, min_contrast=10,
                 rig=plane_products.acq.rig)
    assert (out / "rig.json").exists()
    maps = load_decoded(out)
    assert len(maps) == 2
    for a, b in zip(maps, plane_products.maps):
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.status, b.status)
        assert a.spec == b.spec
    corrs = read_correspondences(out / "correspondences.bin")
    assert set(corrs.entries) == set(plane_products.corrs.entries)
    manifest = read_json(out / "manifest.json")
    assert manifest["shadow_threshold"] == 40


def test_cloud_round_trip(tmp_path):
    keys = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.int32)
    points = np.array([[0.125, -3.25, 500.0],
                       [1.0 / 3.0, 2.0 / 7.0, 499.987654321],
                       [-17.5, 42.0, 512.25]])
    color = np.array([[10, 20, 30], [40, 50, 60], [70, 80, 90]], dtype=np.uint8)
    cloud = GridCloud(resolution=(4, 4), keys=keys, points=points,
                      support=np.array([1, 2, 3], dtype=np.int32), color=color)
    ply = tmp_path / "cloud.ply"
    index = tmp_path / "cloud_index.json"
    save_cloud(cloud, ply, index)
    back = load_cloud(ply, index)
    assert back.resolution == (4, 4)
    assert np.array_equal(back.keys, keys)
    assert np.array_equal(back.support, cloud.support)
    assert np.array_equal(back.color, color)
    # Coordinates survive the fixed decimal encoding to 1e-8.
    assert np.abs(back.points - points).max() < 1e-7


def test_cloud_files_are_deterministic(tmp_path):
    rng = np.random.default_rng(7)
    keys = np.array([[x, y] for y in range(4) for x in range(4)], dtype=np.int32)
    cloud = GridCloud(resolution=(4, 4), keys=keys,
                      points=rng.normal(size=(16, 3)) * 100.0,
                      support=np.ones(16, dtype=np.int32))
    save_cloud(cloud, tmp_path / "a.ply", tmp_path / "a.json")
    save_cloud(cloud, tmp_path / "b.ply", tmp_path / "b.json")
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def two_triangle_mesh():
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                         [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return GridMesh(vertices=vertices, faces=faces, mode="tri")


def test_obj_export_line_counts(tmp_path):
    path = tmp_path / "mesh.obj"
    save_mesh(two_triangle_mesh(), path)
    lines = path.read_text().splitlines()
    assert sum(1 for ln in lines if ln.startswith("v ")) == 4
    assert sum(1 for ln in lines if ln.startswith("f ")) == 2
    verts, faces, colors = load_mesh(path)
    assert verts.shape == (4, 3)
    assert np.array_equal(faces, two_triangle_mesh().faces)
    assert colors is None


def test_ply_mesh_round_trip(tmp_path):
    mesh = two_triangle_mesh()
    mesh = GridMesh(vertices=mesh.vertices, faces=mesh.faces, mode="tri",
                    color=np.array([[255, 0, 0], [0, 255, 0], [0, 0, 255],
                                    [217, 217, 217]], dtype=np.uint8))
    path = tmp_path / "mesh.ply"
    save_mesh(mesh, path)
    verts, faces, colors = load_mesh(path)
    assert np.allclose(verts, mesh.vertices)
    assert np.array_equal(faces, mesh.faces)
    assert np.array_equal(colors, mesh.color)


def test_obj_colors_round_trip(tmp_path):
    mesh = two_triangle_mesh()
    mesh = GridMesh(vertices=mesh.vertices, faces=mesh.faces, mode="tri",
                    color=np.array([[255, 0, 0], [0, 255, 0], [0, 0, 255],
                                    [217, 100, 50]], dtype=np.uint8))
    path = tmp_path / "mesh.obj"
    save_mesh(mesh, path)
    verts, faces, colors = load_mesh(path)
    assert np.array_equal(colors, mesh.color)


def test_quad_mesh_round_trip(tmp_path):
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                         [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    mesh = GridMesh(vertices=vertices,
                    faces=np.array([[0, 1, 2, 3]], dtype=np.int32), mode="quad")
    for suffix in ("ply", "obj"):
        path = tmp_path / f"m.{suffix}"
        save_mesh(mesh, path)
        verts, faces, _ = load_mesh(path)
        assert faces.shape == (1, 4)
        assert np.array_equal(faces[0], [0, 1, 2, 3])


def test_empty_mesh_files_are_valid(tmp_path):
    empty = GridMesh(vertices=np.zeros((0, 3)),
                     faces=np.zeros((0, 3), dtype=np.int32), mode="tri")
    ply = tmp_path / "empty.ply"
    save_mesh(empty, ply)
    verts, faces, _ = load_mesh(ply)
    assert verts.shape[0] == 0
    assert faces.shape[0] == 0
    obj = tmp_path / "empty.obj"
    save_mesh(empty, obj)
    verts, faces, _ = load_mesh(obj)
    assert verts.shape[0] == 0


def test_mesh_round_trip_from_scan(plane_products, tmp_path):
    mesh = grid_mesh(plane_products.cloud, mode="tri")
    path = tmp_path / "scan.ply"
    save_mesh(mesh, path)
    verts, faces, _ = load_mesh(path)
    assert verts.shape == mesh.vertices.shape
    assert np.array_equal(faces, mesh.faces)
