"""Grid meshing tests: cell counts, guards and triangle splitting."""

import numpy as np
import pytest

from slscan.errors import InvalidArgumentError
from slscan.meshing import default_edge_max, grid_mesh, neighbor_edge_lengths
from slscan.reconstruct import GridCloud


def flat_grid_cloud(k, spacing=1.0, drop=()):
    """A fully populated k x k grid on z=0, minus the dropped (x, y) keys."""
    keys = []
    for y in range(k):
        for x in range(k):
            if (x, y) not in drop:
                keys.append((x, y))
    keys = np.asarray(keys, dtype=np.int32)
    points = np.stack([
        keys[:, 0] * spacing,
        keys[:, 1] * spacing,
        np.zeros(len(keys)),
    ], axis=-1)
    return GridCloud(resolution=(k, k), keys=keys, points=points,
                     support=np.ones(len(keys), dtype=np.int32))


def test_smallest_cell():
    cloud = flat_grid_cloud(2)
    assert grid_mesh(cloud, mode="quad").faces.shape == (1, 4)
    assert grid_mesh(cloud, mode="tri").faces.shape == (2, 3)


def test_full_grid_counts():
    cloud = flat_grid_cloud(7)
    quads = grid_mesh(cloud, mode="quad")
    tris = grid_mesh(cloud, mode="tri")
    assert quads.faces.shape == (36, 4)
    assert tris.faces.shape == (72, 3)
    assert quads.vertices.shape == (49, 3)
    assert np.array_equal(quads.vertices, cloud.points)


def test_removed_points_remove_their_cells():
    # An interior point touches 4 cells, an edge point 2, a corner 1.
    assert grid_mesh(flat_grid_cloud(7, drop={(3, 3)}), mode="quad").faces.shape[0] == 32
    assert grid_mesh(flat_grid_cloud(7, drop={(3, 3)}), mode="tri").faces.shape[0] == 64
    assert grid_mesh(flat_grid_cloud(7, drop={(3, 0)}), mode="quad").faces.shape[0] == 34
    assert grid_mesh(flat_grid_cloud(7, drop={(0, 0)}), mode="quad").faces.shape[0] == 35


def test_triangle_count_is_twice_quad_count():
    rng = np.random.default_rng(31)
    for trial in range(5):
        drop = {(int(x), int(y)) for x, y in rng.integers(0, 9, size=(12, 2))}
        cloud = flat_grid_cloud(9, drop=drop)
        n_quads = grid_mesh(cloud, mode="quad").faces.shape[0]
        n_tris = grid_mesh(cloud, mode="tri").faces.shape[0]
        assert n_tris == 2 * n_quads


def test_faces_wind_toward_the_viewer():
    # The cloud sits on z=0 with the projector conceptually at -z; every
    # face normal from counterclockwise winding must point to -z.
    cloud = flat_grid_cloud(5)
    for mode in ("quad", "tri"):
        mesh = grid_mesh(cloud, mode=mode)
        v = mesh.vertices
        for face in mesh.faces:
            n = np.cross(v[face[1]] - v[face[0]], v[face[2]] - v[face[0]])
            assert n[2] < 0


def test_manifold_edges():
    rng = np.random.default_rng(33)
    drop = {(int(x), int(y)) for x, y in rng.integers(0, 8, size=(10, 2))}
    mesh = grid_mesh(flat_grid_cloud(8, drop=drop), mode="tri")
    counts = {}
    for face in mesh.faces:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edge = tuple(sorted((int(face[a]), int(face[b]))))
            counts[edge] = counts.get(edge, 0) + 1
    assert max(counts.values()) <= 2


def test_edge_guard_drops_stretched_cells():
    cloud = flat_grid_cloud(7)
    spike = np.where((cloud.keys == (3, 3)).all(axis=1))[0][0]
    cloud.points[spike, 2] = 100.0
    # Default guard (10x median edge of 1) rejects the spike's 4 cells.
    assert grid_mesh(cloud, mode="quad").faces.shape[0] == 32
    assert grid_mesh(cloud, mode="quad", edge_max=1000.0).faces.shape[0] == 36


def test_default_edge_max():
    cloud = flat_grid_cloud(4, spacing=2.0)
    edges = neighbor_edge_lengths(cloud)
    assert edges.shape[0] == 24
    assert np.allclose(edges, 2.0)
    assert default_edge_max(cloud) == pytest.approx(20.0)


def test_diagonal_choice():
    # Lift one corner so the two cell diagonals differ strongly.
    cloud = flat_grid_cloud(2)
    lifted = np.where((cloud.keys == (1, 1)).all(axis=1))[0][0]
    cloud.points[lifted, 2] = 5.0
    fixed = grid_mesh(cloud, mode="tri", diagonal="fixed")
    shortest = grid_mesh(cloud, mode="tri", diagonal="shortest")
    assert fixed.faces.shape == shortest.faces.shape == (2, 3)

    def undirected_edges(faces):
        out = set()
        for f in faces:
            for a, b in ((0, 1), (1, 2), (2, 0)):
                out.add(tuple(sorted((int(f[a]), int(f[b])))))
        return out

    grid = cloud.grid_index()
    a = int(grid[0, 0])      # (0, 0)
    b = int(grid[1, 0])      # (0, 1)
    c = int(grid[1, 1])      # (1, 1), lifted
    d = int(grid[0, 1])      # (1, 0)
    assert tuple(sorted((a, c))) in undirected_edges(fixed.faces)
    short_edges = undirected_edges(shortest.faces)
    assert tuple(sorted((b, d))) in short_edges
    assert tuple(sorted((a, c))) not in short_edges


def test_empty_cloud():
    cloud = GridCloud(resolution=(4, 4), keys=np.zeros((0, 2), dtype=np.int32),
                      points=np.zeros((0, 3)), support=np.zeros(0, dtype=np.int32))
    mesh = grid_mesh(cloud, mode="quad")
    assert mesh.vertices.shape == (0, 3)
    assert mesh.faces.shape == (0, 4)
    assert default_edge_max(cloud) == 0.0


def test_single_row_has_no_faces():
    keys = np.array([[x, 0] for x in range(5)], dtype=np.int32)
    cloud = GridCloud(resolution=(5, 5), keys=keys,
                      points=np.column_stack([keys.astype(float), np.zeros((5, 1))]),
                      support=np.ones(5, dtype=np.int32))
    assert grid_mesh(cloud, mode="tri").faces.shape[0] == 0


def test_mode_validation(plane_products):
    with pytest.raises(InvalidArgumentError):
        grid_mesh(plane_products.cloud, mode="fan")
    with pytest.raises(InvalidArgumentError):
        grid_mesh(plane_products.cloud, diagonal="longest")


def test_color_carries_through(rig, plane_products):
    from slscan.reconstruct import reconstruct_cloud

    whites = [stack[0] for stack in plane_products.acq.stacks]
    cloud, _ = reconstruct_cloud(plane_products.corrs, rig, white_images=whites)
    mesh = grid_mesh(cloud, mode="quad")
    assert mesh.color is not None
    assert np.array_equal(mesh.color, cloud.color)
