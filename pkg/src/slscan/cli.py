"""Command line front end for the scanning pipeline.

Each subcommand maps to one pipeline stage and consumes the files the
previous stage wrote; `pipeline` chains them all and is byte-identical to
running the stages one by one with the same flags and seed.

Exit codes:
    0  success
    2  command line usage error
    3  a required input file or directory does not exist
    4  an input file violates its documented format
    5  stage failure (geometry, numerics, locked output, bad values)

On failure a single machine-parsable line goes to stderr:
    error[<category>]: <message>

Environment:
    SLS_THREADS  cap worker threads used by the simulator (default 1)
    SLS_KERNEL   numeric kernel backend: auto (default), native, pure
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .calib import estimate_pose, load_correspondences_csv, reprojection_error
from .camera import Rig, load_rig, save_rig
from .decode import (
    DEFAULT_MIN_CONTRAST,
    DEFAULT_SHADOW_THRESHOLD,
    build_correspondences,
    decode_map,
    shadow_mask,
)
from .errors import (
    InvalidArgumentError,
    LockedOutputError,
    MissingInputError,
    ScanError,
)
from .formats import (
    REPORT_SCHEMA,
    load_acquisition,
    load_cloud,
    load_mesh,
    read_correspondences,
    save_acquisition,
    save_cloud,
    save_decoded,
    save_mesh,
    save_patterns,
    write_json,
)
from .meshing import MODES, grid_mesh
from .metrics import MetricReport, format_report
from .patterns import SCHEMES, generate_sequence
from .reconstruct import reconstruct_cloud
from .scene import load_scene
from .simulate import simulate_acquisition
from .utils import parse_resolution

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_FAILURE = 5

LOCK_NAME = ".slscan.lock"

EPILOG = __doc__[__doc__.index("Exit codes:"):]


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the end-to-end run needs, resolved from flags."""

    scene_path: Path
    rig_path: Path
    scheme: str
    shadow_threshold: int
    min_contrast: int
    gap_max: float | None
    edge_max: float | None
    noise_sigma: float
    seed: int
    mode: str
    mesh_format: str
    out_dir: Path


# ---------------------------------------------------------------------------
# plumbing

@contextlib.contextmanager
def output_lock(directory):
    """Exclusive lockfile guard for an output directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockedOutputError(
            f"{directory} is in use by another run "
            f"(delete {lock} if that run is gone)") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode("ascii"))
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{what} not found: {p}")
    return p


def _res_arg(text: str) -> tuple[int, int]:
    try:
        return parse_resolution(text)
    except ScanError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _key_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise InvalidArgumentError(f"expected X,Y, got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_measure(text: str):
    """KEY1:KEY2:LENGTH with keys as projector X,Y pairs."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidArgumentError(
            f"measure spec must be X1,Y1:X2,Y2:LENGTH_MM, got {text!r}")
    return _key_pair(parts[0]), _key_pair(parts[1]), float(parts[2])


def _parse_vert_measure(text: str):
    """I:J:LENGTH with vertex indices into the cloud."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidArgumentError(
            f"measure spec must be I:J:LENGTH_MM, got {text!r}")
    return int(parts[0]), int(parts[1]), float(parts[2])


def _parse_patch(text: str):
    """X0,Y0:X1,Y1:WIDTH_CM:HEIGHT_CM projector-pixel rectangle."""
    parts = text.split(":")
    if len(parts) != 4:
        raise InvalidArgumentError(
            f"patch spec must be X0,Y0:X1,Y1:W_CM:H_CM, got {text!r}")
    return _key_pair(parts[0]), _key_pair(parts[1]), float(parts[2]), float(parts[3])


# ---------------------------------------------------------------------------
# stages (shared between subcommands and pipeline)

def _stage_simulate(scene_path, rig_path, scheme: str, noise_sigma: float,
                    seed: int, out_dir, res=None) -> None:
    scene = load_scene(_require(scene_path, "scene file"))
    rig = load_rig(_require(rig_path, "rig file"))
    proj_res = rig.projector.resolution
    if res is not None and tuple(res) != tuple(proj_res):
        raise InvalidArgumentError(
            f"--res {res[0]}x{res[1]} does not match the rig projector "
            f"resolution {proj_res[0]}x{proj_res[1]}")
    sequence = generate_sequence(proj_res[0], proj_res[1], scheme)
    acq, truth = simulate_acquisition(scene, rig, sequence,
                                      noise_sigma=noise_sigma, seed=seed)
    save_acquisition(acq, truth, out_dir)
    log.info("simulated %d cameras x %d frames into %s",
             len(acq.stacks), sequence.spec.total_frames, out_dir)


def _stage_decode(acq_dir, shadow_threshold: int, min_contrast: int, out_dir) -> None:
    acq, _ = load_acquisition(_require(acq_dir, "acquisition directory"))
    spec = acq.meta.sequence
    maps = []
    for stack in acq.stacks:
        mask = shadow_mask(stack[0], stack[1], shadow_threshold)
        maps.append(decode_map(stack, spec, mask=mask, min_contrast=min_contrast))
    corrs = build_correspondences(maps)
    save_decoded(maps, corrs, out_dir, shadow_threshold, min_contrast, rig=acq.rig)
    log.info("decoded %d cameras, %d shared projector pixels",
             len(maps), len(corrs.entries))


def _stage_reconstruct(dec_dir, rig_path, gap_max, color_from,
                       ply_path, index_path) -> None:
    dec = _require(dec_dir, "decode directory")
    corrs = read_correspondences(dec / "correspondences.bin")
    rig_file = Path(rig_path) if rig_path else dec / "rig.json"
    rig = load_rig(_require(rig_file, "rig file"))
    white = None
    if color_from is not None:
        acq, _ = load_acquisition(_require(color_from, "acquisition directory"))
        white = [stack[0] for stack in acq.stacks]
    cloud, stats = reconstruct_cloud(corrs, rig, gap_max=gap_max, white_images=white)
    save_cloud(cloud, ply_path, index_path)
    log.info("reconstructed %d of %d projector pixels (gap_max %.6g mm)",
             stats.points_out, stats.keys_in, stats.gap_max)


def _stage_mesh(cloud_ply, index_path, mode: str, edge_max, diagonal: str,
                fmt: str, out_path) -> None:
    cloud = load_cloud(_require(cloud_ply, "cloud PLY"),
                       _require(index_path, "cloud index"))
    mesh = grid_mesh(cloud, mode=mode, edge_max=edge_max, diagonal=diagonal)
    save_mesh(mesh, out_path, fmt)
    log.info("meshed %d vertices into %d %s faces",
             mesh.vertices.shape[0], mesh.faces.shape[0], mode)


def _eval_report(cloud, n_planes: int, iterations: int, inlier_eps, seed: int,
                 measures, vert_measures, patches, mesh_path) -> MetricReport:
    points = cloud.points
    plane = flatness = squareness = None
    if n_planes == 1:
        plane = metrics.ransac_plane(points, iterations=iterations,
                                     inlier_eps=inlier_eps, seed=seed)
        flatness = metrics.linearity(points, plane)
    elif n_planes > 1:
        planes = metrics.segment_planes(points, n_planes, iterations=iterations,
                                        inlier_eps=inlier_eps, seed=seed)
        plane = planes[0]
        inl = np.abs(metrics.plane_distances(points, plane)) <= plane.inlier_eps
        flatness = metrics.linearity(points[inl], plane)
        if n_planes == 3:
            squareness = metrics.orthogonality(*planes)

    key_to_vertex = {(int(x), int(y)): i for i, (x, y) in enumerate(cloud.keys)}
    errors = []
    for key_a, key_b, ref in measures:
        for key in (key_a, key_b):
            if key not in key_to_vertex:
                raise InvalidArgumentError(
                    f"projector pixel {key[0]},{key[1]} is not in the cloud")
        span = np.linalg.norm(cloud.points[key_to_vertex[key_a]]
                              - cloud.points[key_to_vertex[key_b]])
        errors.append(metrics.accuracy(ref, float(span)))
    for i, j, ref in vert_measures:
        if not (0 <= i < len(cloud) and 0 <= j < len(cloud)):
            raise InvalidArgumentError(f"vertex pair {i}:{j} out of range")
        span = np.linalg.norm(cloud.points[i] - cloud.points[j])
        errors.append(metrics.accuracy(ref, float(span)))

    faces = None
    if mesh_path is not None:
        _verts, faces, _colors = load_mesh(_require(mesh_path, "mesh file"))
        if _verts.shape[0] != len(cloud):
            raise InvalidArgumentError(
                "mesh vertex count does not match the cloud; pass the mesh "
                "built from this cloud")
    densities = []
    for (x0, y0), (x1, y1), w_cm, h_cm in patches:
        in_rect = ((cloud.keys[:, 0] >= x0) & (cloud.keys[:, 0] <= x1)
                   & (cloud.keys[:, 1] >= y0) & (cloud.keys[:, 1] <= y1))
        n_faces = None
        if faces is not None and len(faces):
            n_faces = int(np.count_nonzero(
                [bool(np.all(in_rect[list(face)])) for face in faces]))
        densities.append(metrics.sampling_rate(w_cm, h_cm,
                                               int(np.count_nonzero(in_rect)),
                                               n_faces))

    return MetricReport(
        point_count=len(cloud),
        flatness=flatness,
        plane=plane,
        squareness=squareness,
        length_errors=tuple(errors),
        sampling=tuple(densities),
    )


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_patterns(args) -> int:
    res_x, res_y = args.res
    seq = generate_sequence(res_x, res_y, args.scheme)
    with output_lock(args.out):
        save_patterns(seq, args.out)
    print(f"{seq.spec.total_frames} frames -> {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    with output_lock(args.out):
        _stage_simulate(args.scene, args.rig, args.scheme, args.noise,
                        args.seed, args.out, res=args.res)
    print(f"acquisition -> {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    rig = load_rig(_require(args.rig, "rig file"))
    corrs = load_correspondences_csv(_require(args.corr, "correspondence CSV"))
    names = [cam.name for cam in rig.cameras] + [rig.projector.name]
    if args.camera not in names:
        raise InvalidArgumentError(
            f"no camera named {args.camera!r} in the rig (have {', '.join(names)})")
    if args.camera == rig.projector.name:
        target = rig.projector
    else:
        target = rig.cameras[[c.name for c in rig.cameras].index(args.camera)]
    result = estimate_pose(target.intrinsics, target.distortion, corrs,
                           init=target.pose, max_iters=args.max_iters)
    updated = dataclasses.replace(target, pose=result.pose)
    if args.camera == rig.projector.name:
        new_rig = Rig(cameras=rig.cameras, projector=updated)
    else:
        cams = tuple(updated if c.name == args.camera else c for c in rig.cameras)
        new_rig = Rig(cameras=cams, projector=rig.projector)
    final = reprojection_error(corrs, updated)
    print(f"camera: {args.camera}")
    print(f"residual_px: {result.residual:.12g}")
    print(f"reprojection_px: {final:.12g}")
    print(f"iterations: {result.iterations}")
    print(f"converged: {str(result.converged).lower()}")
    if args.out:
        out = Path(args.out)
        with output_lock(out.parent):
            save_rig(new_rig, out)
        print(f"rig -> {out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    with output_lock(args.out):
        _stage_decode(args.acq, args.shadow_threshold, args.min_contrast, args.out)
    print(f"decoded maps -> {args.out}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ply = out / "cloud.ply"
    index = out / "cloud_index.json"
    with output_lock(out):
        _stage_reconstruct(args.decoded, args.rig, args.gap_max,
                           args.color_from, ply, index)
    print(f"cloud -> {ply}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    cloud_ply = Path(args.cloud)
    index = Path(args.index) if args.index else cloud_ply.with_name("cloud_index.json")
    out = Path(args.out)
    with output_lock(out.parent):
        _stage_mesh(cloud_ply, index, args.mode, args.edge_max, args.diagonal,
                    args.format, out)
    print(f"mesh -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cloud_ply = Path(args.cloud)
    index = Path(args.index) if args.index else cloud_ply.with_name("cloud_index.json")
    cloud = load_cloud(_require(cloud_ply, "cloud PLY"),
                       _require(index, "cloud index"))
    measures = [_parse_measure(m) for m in (args.measure or [])]
    vert_measures = [_parse_vert_measure(m) for m in (args.measure_verts or [])]
    patches = [_parse_patch(p) for p in (args.patch or [])]
    report = _eval_report(cloud, args.planes, args.ransac_iters, args.inlier_eps,
                          args.seed, measures, vert_measures, patches,
                          args.mesh_file)
    sys.stdout.write(format_report(report))
    if args.out:
        out = Path(args.out)
        with output_lock(out.parent):
            write_json(out, {"schema": REPORT_SCHEMA, **report.to_dict()})
        print(f"report -> {out}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = PipelineConfig(
        scene_path=_require(args.scene, "scene file"),
        rig_path=_require(args.rig, "rig file"),
        scheme=args.scheme,
        shadow_threshold=args.shadow_threshold,
        min_contrast=args.min_contrast,
        gap_max=args.gap_max,
        edge_max=args.edge_max,
        noise_sigma=args.noise,
        seed=args.seed,
        mode=args.mode,
        mesh_format=args.format,
        out_dir=Path(args.out),
    )
    out = config.out_dir
    with output_lock(out):
        acq_dir = out / "acq"
        dec_dir = out / "decode"
        ply = out / "cloud.ply"
        index = out / "cloud_index.json"
        mesh_path = out / f"mesh.{config.mesh_format}"
        _stage_simulate(config.scene_path, config.rig_path, config.scheme,
                        config.noise_sigma, config.seed, acq_dir)
        _stage_decode(acq_dir, config.shadow_threshold, config.min_contrast,
                      dec_dir)
        _stage_reconstruct(dec_dir, None, config.gap_max, acq_dir, ply, index)
        _stage_mesh(ply, index, config.mode, config.edge_max, "fixed",
                    config.mesh_format, mesh_path)
        cloud = load_cloud(ply, index)
        report = _eval_report(cloud, 1, metrics.RANSAC_ITERATIONS, None,
                              config.seed, [], [], [], None)
        write_json(out / "report.json",
                   {"schema": REPORT_SCHEMA, **report.to_dict()})
    print(f"pipeline -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slscan",
        description="Structured light scanning pipeline over synthetic captures.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("patterns", parents=[common],
                       help="generate the stripe pattern sequence as PGM files")
    p.add_argument("--res", type=_res_arg, required=True, metavar="WxH",
                   help="projector resolution, e.g. 1024x768")
    p.add_argument("--scheme", choices=SCHEMES, default="gray")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("simulate", parents=[common],
                       help="render an acquisition of a scene with a rig")
    p.add_argument("--scene", required=True, metavar="JSON")
    p.add_argument("--rig", required=True, metavar="JSON")
    p.add_argument("--res", type=_res_arg, metavar="WxH",
                   help="expected projector resolution (cross-check only)")
    p.add_argument("--scheme", choices=SCHEMES, default="gray")
    p.add_argument("--noise", type=_nonneg_float, default=0.0, metavar="SIGMA",
                   help="Gaussian sensor noise in gray levels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common],
                       help="estimate a camera pose from 2D-3D correspondences")
    p.add_argument("--rig", required=True, metavar="JSON")
    p.add_argument("--camera", required=True, metavar="NAME",
                   help="name of the camera (or projector) to calibrate")
    p.add_argument("--corr", required=True, metavar="CSV",
                   help="lines of u,v,X,Y,Z")
    p.add_argument("--max-iters", type=_nonneg_int, default=100)
    p.add_argument("--out", metavar="JSON",
                   help="write the updated rig here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("decode", parents=[common],
                       help="decode stripe captures to projector coordinates")
    p.add_argument("--acq", required=True, metavar="DIR",
                   help="acquisition directory from `simulate`")
    p.add_argument("--shadow-threshold", type=_nonneg_int,
                   default=DEFAULT_SHADOW_THRESHOLD, metavar="N")
    p.add_argument("--min-contrast", type=_nonneg_int,
                   default=DEFAULT_MIN_CONTRAST, metavar="N")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="triangulate decoded correspondences into a cloud")
    p.add_argument("--decoded", required=True, metavar="DIR",
                   help="decode directory from `decode`")
    p.add_argument("--rig", metavar="JSON",
                   help="rig override (default: rig.json in the decode dir)")
    p.add_argument("--gap-max", type=_nonneg_float, metavar="MM",
                   help="max ray closest-approach gap (default 5x median)")
    p.add_argument("--color-from", metavar="DIR",
                   help="acquisition directory to sample vertex colors from")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="writes cloud.ply and cloud_index.json here")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("mesh", parents=[common],
                       help="build a grid mesh from a reconstructed cloud")
    p.add_argument("--cloud", required=True, metavar="PLY")
    p.add_argument("--index", metavar="JSON",
                   help="cloud sidecar (default: cloud_index.json next to the PLY)")
    p.add_argument("--mode", choices=MODES, default="quad")
    p.add_argument("--edge-max", type=_nonneg_float, metavar="MM",
                   help="max face edge length (default 10x median grid edge)")
    p.add_argument("--diagonal", choices=("fixed", "shortest"), default="fixed")
    p.add_argument("--format", choices=("ply", "obj"), default="ply")
    p.add_argument("--out", required=True, metavar="FILE")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("eval", parents=[common],
                       help="fit planes and report quality metrics for a cloud")
    p.add_argument("--cloud", required=True, metavar="PLY")
    p.add_argument("--index", metavar="JSON")
    p.add_argument("--planes", type=_nonneg_int, default=1,
                   help="number of planes to fit sequentially; 3 adds the "
                        "pairwise angle report")
    p.add_argument("--ransac-iters", type=_nonneg_int,
                   default=metrics.RANSAC_ITERATIONS)
    p.add_argument("--inlier-eps", type=_nonneg_float, metavar="MM")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--measure", action="append", metavar="X1,Y1:X2,Y2:MM",
                   help="compare the span of two projector pixels against a "
                        "known length; repeatable")
    p.add_argument("--measure-verts", action="append", metavar="I:J:MM",
                   help="same, with cloud vertex indices")
    p.add_argument("--patch", action="append", metavar="X0,Y0:X1,Y1:W:H",
                   help="projector-pixel rectangle and its physical size in "
                        "cm for density; repeatable")
    p.add_argument("--mesh-file", metavar="FILE",
                   help="mesh built from this cloud, enables face density")
    p.add_argument("--out", metavar="JSON", help="write the report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common],
                       help="run simulate, decode, reconstruct, mesh and eval")
    p.add_argument("--scene", required=True, metavar="JSON")
    p.add_argument("--rig", required=True, metavar="JSON")
    p.add_argument("--scheme", choices=SCHEMES, default="gray")
    p.add_argument("--shadow-threshold", type=_nonneg_int,
                   default=DEFAULT_SHADOW_THRESHOLD, metavar="N")
    p.add_argument("--min-contrast", type=_nonneg_int,
                   default=DEFAULT_MIN_CONTRAST, metavar="N")
    p.add_argument("--gap-max", type=_nonneg_float, metavar="MM")
    p.add_argument("--edge-max", type=_nonneg_float, metavar="MM")
    p.add_argument("--noise", type=_nonneg_float, default=0.0, metavar="SIGMA")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=MODES, default="quad")
    p.add_argument("--format", choices=("ply", "obj"), default="ply")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error[missing-input]: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ScanError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        if exc.category == "missing-input":
            return EXIT_MISSING
        if exc.category == "format":
            return EXIT_FORMAT
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
