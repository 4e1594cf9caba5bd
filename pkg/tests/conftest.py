"""Shared fixtures: an aligned two-camera rig and cached synthetic scans.

The rig is tuned so that on a frontal plane at z=500 every projector pixel
footprint center lands exactly on one pixel center of each camera. Projector
pixel (i, j) then reconstructs to (2i - 127, 2j - 126, 500) up to float
rounding, which turns coverage and accuracy checks into exact comparisons
instead of statistical ones. The box scene sits closer (z ~ 350) and is
rotated so all three visible faces slope across many stripe transitions.

Scans are expensive relative to everything else in the suite, so they are
simulated once per session and shared.
"""

from __future__ import annotations

import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest

from slscan.camera import CameraModel, Distortion, Intrinsics, Pose, Rig, save_rig
from slscan.decode import build_correspondences, decode_map
from slscan.patterns import generate_sequence
from slscan.reconstruct import reconstruct_cloud
from slscan.scene import Box, RectPlane, Scene, save_scene
from slscan.simulate import simulate_acquisition

PLANE_Z = 500.0
BOX_CENTER = (0.0, 0.0, 350.0)
BOX_HALF = 55.0
# Plane angles used by the box fixture; chosen so no face is grid-aligned.
BOX_TILT_X = -35.0
BOX_TILT_Y = 40.0
# Inlier band for segmenting the box faces. Points on a slanted face snap to
# the discrete depths where matched pixel rays cross, so the band must cover
# that full staircase or the fit sees a biased slab edge.
BOX_SEGMENT_EPS = 1.5


def make_camera(name, focal, u0, v0, resolution, translation):
    """Distortion-free axis-aligned camera at -translation on the x axis."""
    return CameraModel(
        intrinsics=Intrinsics(alpha=focal, beta=focal, u0=u0, v0=v0),
        distortion=Distortion(),
        pose=Pose(np.eye(3), np.asarray(translation, dtype=np.float64)),
        resolution=resolution,
        name=name,
    )


def rot_x(degrees: float) -> np.ndarray:
    a = np.radians(degrees)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(degrees: float) -> np.ndarray:
    a = np.radians(degrees)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def build_rig() -> Rig:
    projector = make_camera("projector", 250.0, 64.0, 63.5, (128, 128), (0.0, 0.0, 0.0))
    cam0 = make_camera("cam0", 250.0, 128.0, 128.0, (256, 256), (99.0, 0.0, 0.0))
    cam1 = make_camera("cam1", 250.0, 128.0, 128.0, (256, 256), (-99.0, 0.0, 0.0))
    return Rig(cameras=[cam0, cam1], projector=projector)


def build_plane_scene() -> Scene:
    return Scene([RectPlane(point=(0.0, 0.0, PLANE_Z), normal=(0.0, 0.0, -1.0),
                            extent=(400.0, 400.0))])


def build_box_scene() -> Scene:
    rotation = rot_x(BOX_TILT_X) @ rot_y(BOX_TILT_Y)
    return Scene([Box(center=BOX_CENTER, half_extents=(BOX_HALF, BOX_HALF, BOX_HALF),
                      rotation=rotation)])


def scan_products(scene, rig, sequence, noise_sigma=0.0, seed=0):
    """Simulate, decode and triangulate one scan; returns all intermediates."""
    acq, truth = simulate_acquisition(scene, rig, sequence, noise_sigma=noise_sigma,
                                      seed=seed)
    maps = [decode_map(stack, acq.meta.sequence) for stack in acq.stacks]
    corrs = build_correspondences(maps)
    cloud, stats = reconstruct_cloud(corrs, rig)
    return SimpleNamespace(acq=acq, truth=truth, maps=maps, corrs=corrs,
                           cloud=cloud, stats=stats)


@pytest.fixture(scope="session")
def rig():
    return build_rig()


@pytest.fixture(scope="session")
def sequence():
    return generate_sequence(128, 128)


@pytest.fixture(scope="session")
def plane_scene():
    return build_plane_scene()


@pytest.fixture(scope="session")
def box_scene():
    return build_box_scene()


@pytest.fixture(scope="session")
def plane_products(plane_scene, rig, sequence):
    return scan_products(plane_scene, rig, sequence)


@pytest.fixture(scope="session")
def noisy_plane_products(plane_scene, rig, sequence):
    return scan_products(plane_scene, rig, sequence, noise_sigma=10.0, seed=0)


@pytest.fixture(scope="session")
def box_products(box_scene, rig, sequence):
    return scan_products(box_scene, rig, sequence)


@pytest.fixture(scope="session")
def config_files(tmp_path_factory, rig, plane_scene, box_scene):
    """Rig and scene JSON files for command line runs."""
    d = tmp_path_factory.mktemp("config")
    save_rig(rig, d / "rig.json")
    save_scene(plane_scene, d / "plane.json")
    save_scene(box_scene, d / "box.json")
    return SimpleNamespace(rig=d / "rig.json", plane=d / "plane.json", box=d / "box.json")


def run_cli(*args, env=None):
    """Run the installed command line tool in a subprocess."""
    cmd = [sys.executable, "-m", "slscan"] + [str(a) for a in args]
    return subprocess.run(cmd, capture_output=True, text=True, env=env)


@pytest.fixture(scope="session", name="run_cli")
def run_cli_fixture():
    return run_cli


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory, config_files):
    """One full noise-free pipeline run over the plane scene."""
    out = tmp_path_factory.mktemp("pipe") / "run"
    proc = run_cli("pipeline", "--scene", config_files.plane, "--rig", config_files.rig,
                   "--noise", "0", "--seed", "0", "--out", out)
    assert proc.returncode == 0, proc.stderr
    return out


# -- acceptance check summary --------------------------------------------------
# test_acceptance registers one verdict per check; they are echoed after the
# normal test summary so the pass/fail lines are visible without -s.

ACCEPTANCE_VERDICTS: list[tuple[int, str]] = []


def register_verdict(number: int, name: str, passed: bool, detail: str = "") -> str:
    tail = f" ({detail})" if detail else ""
    line = f"[acceptance {number:02d}] {name}: {'PASS' if passed else 'FAIL'}{tail}"
    ACCEPTANCE_VERDICTS.append((number, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance checks")
    for _, line in sorted(ACCEPTANCE_VERDICTS):
        terminalreporter.write_line(line)
