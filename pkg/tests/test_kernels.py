"""Compute-lane equivalence: the compiled kernels must match the pure ones."""

import os
import subprocess
import sys

import numpy as np
import pytest

from slscan import _kernels
from slscan._kernels import available_backends, pure

HAVE_NATIVE = "native" in available_backends()

needs_native = pytest.mark.skipif(not HAVE_NATIVE, reason="compiled kernels not built")


def random_geometry(seed=0):
    rng = np.random.default_rng(seed)
    n = 500
    origins = rng.uniform(-50.0, 50.0, size=(n, 3))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def unit_rows(k):
        v = rng.normal(size=(k, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    plane_normal = unit_rows(3)
    plane_u = np.cross(plane_normal, unit_rows(3))
    plane_u /= np.linalg.norm(plane_u, axis=1, keepdims=True)
    plane_v = np.cross(plane_normal, plane_u)
    args = dict(
        plane_point=rng.uniform(-100.0, 100.0, size=(3, 3)),
        plane_normal=plane_normal,
        plane_u=plane_u,
        plane_v=plane_v,
        plane_half=rng.uniform(10.0, 80.0, size=(3, 2)),
        box_center=rng.uniform(-100.0, 100.0, size=(2, 3)),
        box_rot=np.stack([np.linalg.qr(rng.normal(size=(3, 3)))[0] for _ in range(2)]),
        box_half=rng.uniform(5.0, 40.0, size=(2, 3)),
        tri_v0=rng.uniform(-100.0, 100.0, size=(4, 3)),
        tri_v1=rng.uniform(-100.0, 100.0, size=(4, 3)),
        tri_v2=rng.uniform(-100.0, 100.0, size=(4, 3)),
    )
    for i in range(2):
        if np.linalg.det(args["box_rot"][i]) < 0:
            args["box_rot"][i][:, 0] *= -1.0
    return origins, dirs, args


@needs_native
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_raycast_lanes_agree(seed):
    native = available_backends()["native"]
    origins, dirs, args = random_geometry(seed)
    t_p, g_p, n_p = pure.raycast(origins, dirs, **args)
    t_n, g_n, n_n = native.raycast(origins, dirs, **args)
    assert np.array_equal(g_p, g_n)
    hit = g_p >= 0
    assert hit.any()
    assert np.allclose(t_p[hit], t_n[hit], atol=1e-9)
    assert np.all(np.isinf(t_p[~hit]) == np.isinf(t_n[~hit]))
    assert np.allclose(n_p[hit], n_n[hit], atol=1e-9)


@needs_native
def test_intersect_lanes_agree():
    native = available_backends()["native"]
    rng = np.random.default_rng(4)
    n = 2000
    p = rng.uniform(-100.0, 100.0, size=(n, 3))
    q = rng.uniform(-100.0, 100.0, size=(n, 3))
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # Mix in exactly parallel pairs to exercise the degenerate branch.
    v[::10] = u[::10]
    m_p, g_p, s_p, t_p, ok_p = pure.intersect_pairs(p, u, q, v)
    m_n, g_n, s_n, t_n, ok_n = native.intersect_pairs(p, u, q, v)
    assert np.array_equal(ok_p, ok_n)
    assert not ok_p[::10].any()
    ok = ok_p
    assert np.allclose(m_p[ok], m_n[ok], atol=1e-9)
    assert np.allclose(g_p[ok], g_n[ok], atol=1e-9)
    assert np.allclose(s_p[ok], s_n[ok], atol=1e-9)
    assert np.allclose(t_p[ok], t_n[ok], atol=1e-9)


@needs_native
def test_classify_lanes_agree():
    native = available_backends()["native"]
    rng = np.random.default_rng(8)
    stack = rng.integers(0, 256, size=(16, 40, 50), dtype=np.uint8)
    direct = np.arange(2, 16, 2, dtype=np.intp)
    inverse = direct + 1
    c_p, b_p = pure.classify_stack(stack, direct, inverse, 10)
    c_n, b_n = native.classify_stack(stack, direct, inverse, 10)
    assert np.array_equal(c_p, c_n)
    assert np.array_equal(b_p, b_n)


def test_classify_stack_thresholds():
    stack = np.zeros((4, 1, 3), dtype=np.uint8)
    # Pixel 0: clear 1 then clear 0. Pixel 1: one contrast exactly at the
    # limit, which must not decode. Pixel 2: both bits flat.
    stack[0, 0] = (235, 120, 50)
    stack[1, 0] = (35, 110, 50)
    stack[2, 0] = (35, 200, 50)
    stack[3, 0] = (235, 100, 50)
    codes, bad = pure.classify_stack(
        stack, np.array([0, 2], dtype=np.intp), np.array([1, 3], dtype=np.intp), 10
    )
    assert codes[0, 0] == 0b10
    assert not bad[0, 0]
    assert bad[0, 1]
    assert bad[0, 2]


def test_backend_selection_env():
    code = "import slscan._kernels as k; print(k.backend_name)"
    for want in ["pure"] + (["native"] if HAVE_NATIVE else []):
        env = dict(os.environ, SLS_KERNEL=want)
        proc = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, env=env
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == want


def test_active_backend_is_exported():
    assert _kernels.backend_name in available_backends()
