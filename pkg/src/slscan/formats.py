"""On-disk formats for every pipeline stage.

All writers are deterministic: fixed key order in JSON, fixed float formatting
in PLY/OBJ, no timestamps, no absolute paths. Rerunning a stage with the same
inputs reproduces its outputs byte for byte.

Formats
-------
PGM (images):
    Binary P5. 8-bit uses maxval 255, 16-bit uses maxval 65535 with big-endian
    sample bytes, as the format requires.

Pattern directory (patterns stage):
    pat_<index:02>_<role>.pgm per frame plus manifest.json
    (schema "slscan-patterns@1") listing resolution, scheme, stripe counts and
    the ordered frame roles and file names.

Acquisition directory (simulate stage):
    rig.json (see camera.save_rig), manifest.json
    (schema "slscan-acquisition@1") and one subdirectory per camera,
    cam<k>/img_<index:02>.pgm in frame order. Ground truth per camera is
    cam<k>/gt.bin: one record per pixel, row-major, little-endian, packed as
    3 x f64 world point (NaN when no surface), 2 x i32 projector pixel
    (-1 when unlit) and 1 flag byte (bit 0 surface hit, bit 1 shadowed),
    33 bytes per pixel.

Decode directory (decode stage):
    Per camera three PGMs: cam<k>_x.pgm and cam<k>_y.pgm (16-bit, decoded
    projector coordinate, 65535 where invalid) and cam<k>_status.pgm (8-bit
    status codes from the decode module). correspondences.bin holds the
    merged projector-to-camera map; manifest.json
    (schema "slscan-decode@1") records thresholds, the sequence layout and
    file names.

Correspondence binary (correspondences.bin):
    Little-endian. Header: magic "SLCM", u16 version (1), u16 camera count,
    u32 projector res_x, u32 res_y, u64 key count (24 bytes total). Then per
    projector key, in row-major (y, x) key order: i32 key x, i32 key y, then
    per camera a u32 pixel count followed by that many i32 (x, y) pairs.

Cloud (reconstruct stage):
    ASCII PLY, "element vertex N" with float x y z and, when color is
    carried, uchar red green blue. Coordinates are printed with 8 decimals.
    A JSON sidecar (schema "slscan-cloud-index@1") maps vertex order to
    projector pixel keys and per-vertex support counts; the mesh stage needs
    it to rebuild the grid.

Mesh (mesh stage):
    ASCII PLY with a face element ("property list uchar int vertex_indices"),
    or OBJ with "v x y z [r g b]" and 1-indexed "f" lines. Colors in OBJ are
    floats in [0, 1]. Both round-trip through the readers in this module.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .camera import Rig, load_rig, save_rig
from .decode import STATUS_OK, CorrespondenceMap, DecodedMap
from .errors import FormatError
from .meshing import GridMesh
from .patterns import PatternFrame, PatternSequence, SequenceSpec
from .reconstruct import GridCloud
from .simulate import AcquisitionMeta, AcquisitionSet, CameraTruth, GroundTruth

PATTERNS_SCHEMA = "slscan-patterns@1"
ACQUISITION_SCHEMA = "slscan-acquisition@1"
DECODE_SCHEMA = "slscan-decode@1"
CLOUD_INDEX_SCHEMA = "slscan-cloud-index@1"
REPORT_SCHEMA = "slscan-report@1"

CORR_MAGIC = b"SLCM"
CORR_VERSION = 1
MAP_INVALID = 65535  # sentinel in 16-bit x/y map PGMs

GT_DTYPE = np.dtype([("point", "<f8", (3,)), ("proj", "<i4", (2,)), ("flags", "u1")])

FLOAT_FMT = "%.8f"


# ---------------------------------------------------------------------------
# JSON helpers

def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="ascii")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="ascii"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


def _expect_schema(obj, schema: str, path) -> None:
    if not isinstance(obj, dict) or obj.get("schema") != schema:
        raise FormatError(f"{path}: expected schema {schema!r}")


# ---------------------------------------------------------------------------
# PGM

def write_pgm(path, image: np.ndarray) -> None:
    """Write a grayscale image as binary P5, 8- or 16-bit by dtype."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise FormatError("PGM image must be 2-d")
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    elif img.dtype == np.uint16:
        maxval, payload = 65535, img.astype(">u2").tobytes()
    else:
        raise FormatError(f"PGM supports uint8/uint16, not {img.dtype}")
    h, w = img.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + payload)


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last one.
    """
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise FormatError("truncated PGM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    if i >= len(data) or not data[i:i + 1].isspace():
        raise FormatError("PGM header not terminated by whitespace")
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: non-numeric PGM header") from None
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: bad PGM size {w}x{h}")
    if maxval == 255:
        dtype, itemsize = np.uint8, 1
    elif maxval == 65535:
        dtype, itemsize = np.dtype(">u2"), 2
    else:
        raise FormatError(f"{path}: unsupported PGM maxval {maxval}")
    need = w * h * itemsize
    payload = data[offset:offset + need]
    if len(payload) != need:
        raise FormatError(f"{path}: PGM payload is {len(payload)} bytes, expected {need}")
    img = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.ascontiguousarray(img.astype(np.uint16)) if itemsize == 2 else img.copy()


# ---------------------------------------------------------------------------
# Pattern sequences

def frame_filename(index: int, role_name: str) -> str:
    return f"pat_{index:02d}_{role_name}.pgm"


def _spec_to_dict(spec: SequenceSpec) -> dict:
    return {
        "res_x": spec.res_x,
        "res_y": spec.res_y,
        "scheme": spec.scheme,
        "n_cols": spec.n_cols,
        "n_rows": spec.n_rows,
    }


def _spec_from_dict(obj: dict, path) -> SequenceSpec:
    try:
        return SequenceSpec(
            res_x=int(obj["res_x"]),
            res_y=int(obj["res_y"]),
            scheme=str(obj["scheme"]),
            n_cols=int(obj["n_cols"]),
            n_rows=int(obj["n_rows"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad sequence description ({exc})") from None


def save_patterns(seq: PatternSequence, out_dir) -> Path:
    """Write every frame as PGM plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = []
    for i, frame in enumerate(seq.frames):
        name = frame_filename(i, frame.role.name)
        write_pgm(out / name, frame.pixels)
        frames.append({"index": i, "role": frame.role.name, "file": name})
    manifest = {
        "schema": PATTERNS_SCHEMA,
        "sequence": _spec_to_dict(seq.spec),
        "frames": frames,
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def load_patterns(in_dir) -> PatternSequence:
    src = Path(in_dir)
    manifest = read_json(src / "manifest.json")
    _expect_schema(manifest, PATTERNS_SCHEMA, src / "manifest.json")
    spec = _spec_from_dict(manifest["sequence"], src / "manifest.json")
    roles = spec.roles()
    entries = manifest.get("frames", [])
    if len(entries) != len(roles):
        raise FormatError(
            f"{src}: manifest lists {len(entries)} frames, layout needs {len(roles)}")
    frames = []
    for role, entry in zip(roles, entries):
        if entry.get("role") != role.name:
            raise FormatError(f"{src}: frame {entry.get('index')} has role "
                              f"{entry.get('role')!r}, expected {role.name!r}")
        pixels = read_pgm(src / entry["file"])
        if pixels.dtype != np.uint8:
            raise FormatError(f"{src}: pattern frames must be 8-bit")
        if pixels.shape != (spec.res_y, spec.res_x):
            raise FormatError(f"{src}: frame {entry['file']} is {pixels.shape}, "
                              f"expected {(spec.res_y, spec.res_x)}")
        frames.append(PatternFrame(role=role, pixels=pixels))
    return PatternSequence(spec=spec, frames=tuple(frames))


# ---------------------------------------------------------------------------
# Ground truth

def ground_truth_bytes(truth: CameraTruth) -> bytes:
    h, w = truth.flags.shape
    rec = np.empty(h * w, dtype=GT_DTYPE)
    rec["point"] = truth.point.reshape(-1, 3)
    rec["proj"] = truth.proj.reshape(-1, 2)
    rec["flags"] = truth.flags.reshape(-1)
    return rec.tobytes()


def read_ground_truth(path, resolution: tuple[int, int]) -> CameraTruth:
    w, h = resolution
    data = Path(path).read_bytes()
    need = h * w * GT_DTYPE.itemsize
    if len(data) != need:
        raise FormatError(f"{path}: ground truth is {len(data)} bytes, expected {need}")
    rec = np.frombuffer(data, dtype=GT_DTYPE)
    return CameraTruth(
        point=rec["point"].reshape(h, w, 3).copy(),
        proj=rec["proj"].reshape(h, w, 2).copy(),
        flags=rec["flags"].reshape(h, w).copy(),
    )


# ---------------------------------------------------------------------------
# Acquisitions

def save_acquisition(acq: AcquisitionSet, truth: GroundTruth | None, out_dir) -> Path:
    """Write rig, per-camera image stacks and ground truth; returns the
    manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_rig(acq.rig, out / "rig.json")
    cameras = []
    for ci, stack in enumerate(acq.stacks):
        cam = acq.rig.cameras[ci]
        sub = f"cam{ci}"
        (out / sub).mkdir(exist_ok=True)
        images = []
        for fi in range(stack.shape[0]):
            name = f"img_{fi:02d}.pgm"
            write_pgm(out / sub / name, stack[fi])
            images.append(name)
        entry = {"name": cam.name, "dir": sub, "images": images}
        if truth is not None:
            (out / sub / "gt.bin").write_bytes(ground_truth_bytes(truth.cameras[ci]))
            entry["ground_truth"] = "gt.bin"
        cameras.append(entry)
    manifest = {
        "schema": ACQUISITION_SCHEMA,
        "rig": "rig.json",
        "sequence": _spec_to_dict(acq.meta.sequence),
        "noise_sigma": acq.meta.noise_sigma,
        "seed": acq.meta.seed,
        "cameras": cameras,
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def load_acquisition(in_dir) -> tuple[AcquisitionSet, GroundTruth | None]:
    src = Path(in_dir)
    manifest = read_json(src / "manifest.json")
    _expect_schema(manifest, ACQUISITION_SCHEMA, src / "manifest.json")
    rig = load_rig(src / manifest["rig"])
    spec = _spec_from_dict(manifest["sequence"], src / "manifest.json")
    entries = manifest.get("cameras", [])
    if len(entries) != len(rig.cameras):
        raise FormatError(f"{src}: manifest lists {len(entries)} cameras, "
                          f"rig has {len(rig.cameras)}")
    stacks = []
    truths = []
    for ci, entry in enumerate(entries):
        cam = rig.cameras[ci]
        w, h = cam.resolution
        names = entry.get("images", [])
        if len(names) != spec.total_frames:
            raise FormatError(f"{src}: camera {ci} has {len(names)} images, "
                              f"sequence needs {spec.total_frames}")
        stack = np.empty((spec.total_frames, h, w), dtype=np.uint8)
        for fi, name in enumerate(names):
            img = read_pgm(src / entry["dir"] / name)
            if img.dtype != np.uint8 or img.shape != (h, w):
                raise FormatError(f"{src}: image {name} does not match camera "
                                  f"{ci} resolution {cam.resolution}")
            stack[fi] = img
        stacks.append(stack)
        if "ground_truth" in entry:
            truths.append(read_ground_truth(src / entry["dir"] / entry["ground_truth"],
                                            cam.resolution))
    meta = AcquisitionMeta(
        sequence=spec,
        noise_sigma=float(manifest.get("noise_sigma", 0.0)),
        seed=int(manifest.get("seed", 0)),
    )
    acq = AcquisitionSet(stacks=tuple(stacks), rig=rig, meta=meta)
    truth = GroundTruth(cameras=tuple(truths)) if len(truths) == len(entries) else None
    return acq, truth


# ---------------------------------------------------------------------------
# Decoded maps and correspondences

def _map_to_u16(values: np.ndarray) -> np.ndarray:
    out = values.astype(np.int64)
    if out.max(initial=0) >= MAP_INVALID:
        raise FormatError("decoded coordinate exceeds 16-bit map range")
    out[out < 0] = MAP_INVALID
    return out.astype(np.uint16)


def save_decoded(maps: list[DecodedMap], corrs: CorrespondenceMap, out_dir,
                 shadow_threshold: int, min_contrast: int,
                 rig: Rig | None = None) -> Path:
    """Write per-camera coordinate/status maps plus the correspondence
    binary. When a rig is given it is copied into the output directory so the
    reconstruction stage can run from this directory alone."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cameras = []
    for ci, dm in enumerate(maps):
        files = {
            "x_map": f"cam{ci}_x.pgm",
            "y_map": f"cam{ci}_y.pgm",
            "status": f"cam{ci}_status.pgm",
        }
        write_pgm(out / files["x_map"], _map_to_u16(dm.x))
        write_pgm(out / files["y_map"], _map_to_u16(dm.y))
        write_pgm(out / files["status"], dm.status.astype(np.uint8))
        cameras.append(files)
    write_correspondences(corrs, out / "correspondences.bin")
    manifest = {
        "schema": DECODE_SCHEMA,
        "sequence": _spec_to_dict(maps[0].spec),
        "shadow_threshold": shadow_threshold,
        "min_contrast": min_contrast,
        "cameras": cameras,
        "correspondences": "correspondences.bin",
    }
    if rig is not None:
        save_rig(rig, out / "rig.json")
        manifest["rig"] = "rig.json"
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def load_decoded(in_dir) -> list[DecodedMap]:
    src = Path(in_dir)
    manifest = read_json(src / "manifest.json")
    _expect_schema(manifest, DECODE_SCHEMA, src / "manifest.json")
    spec = _spec_from_dict(manifest["sequence"], src / "manifest.json")
    maps = []
    for entry in manifest.get("cameras", []):
        x = read_pgm(src / entry["x_map"]).astype(np.int32)
        y = read_pgm(src / entry["y_map"]).astype(np.int32)
        status = read_pgm(src / entry["status"])
        if status.dtype != np.uint8:
            raise FormatError(f"{src}: status map must be 8-bit")
        x[x == MAP_INVALID] = -1
        y[y == MAP_INVALID] = -1
        maps.append(DecodedMap(x=x, y=y, status=status.astype(np.uint8), spec=spec))
    return maps


def write_correspondences(corrs: CorrespondenceMap, path) -> None:
    chunks = [struct.pack("<4sHHIIQ", CORR_MAGIC, CORR_VERSION, corrs.n_cameras,
                          corrs.resolution[0], corrs.resolution[1],
                          len(corrs.entries))]
    for key in sorted(corrs.entries, key=lambda k: (k[1], k[0])):
        chunks.append(struct.pack("<ii", key[0], key[1]))
        for pix in corrs.entries[key]:
            chunks.append(struct.pack("<I", pix.shape[0]))
            chunks.append(np.ascontiguousarray(pix.astype("<i4")).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_correspondences(path) -> CorrespondenceMap:
    data = Path(path).read_bytes()
    if len(data) < 24:
        raise FormatError(f"{path}: truncated correspondence file")
    magic, version, n_cameras, res_x, res_y, n_keys = struct.unpack_from(
        "<4sHHIIQ", data, 0)
    if magic != CORR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CORR_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 24
    entries: dict[tuple[int, int], list[np.ndarray]] = {}
    try:
        for _ in range(n_keys):
            kx, ky = struct.unpack_from("<ii", data, offset)
            offset += 8
            pixel_lists = []
            for _ in range(n_cameras):
                (count,) = struct.unpack_from("<I", data, offset)
                offset += 4
                n_bytes = count * 8
                if offset + n_bytes > len(data):
                    raise FormatError(f"{path}: truncated correspondence record")
                pix = np.frombuffer(data, dtype="<i4", count=count * 2,
                                    offset=offset).reshape(count, 2)
                pixel_lists.append(pix.astype(np.int32))
                offset += n_bytes
            entries[(kx, ky)] = pixel_lists
    except struct.error:
        raise FormatError(f"{path}: truncated correspondence file") from None
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return CorrespondenceMap(resolution=(res_x, res_y), n_cameras=n_cameras,
                             entries=entries)


# ---------------------------------------------------------------------------
# Point clouds

def _ply_header(n_vertices: int, with_color: bool, faces: int | None) -> list[str]:
    lines = ["ply", "format ascii 1.0", f"element vertex {n_vertices}",
             "property float x", "property float y", "property float z"]
    if with_color:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    if faces is not None:
        lines += [f"element face {faces}", "property list uchar int vertex_indices"]
    lines.append("end_header")
    return lines


def _vertex_lines(points: np.ndarray, color: np.ndarray | None) -> list[str]:
    lines = []
    for i in range(points.shape[0]):
        x, y, z = points[i]
        line = f"{FLOAT_FMT % x} {FLOAT_FMT % y} {FLOAT_FMT % z}"
        if color is not None:
            r, g, b = color[i]
            line += f" {r} {g} {b}"
        lines.append(line)
    return lines


def save_cloud(cloud: GridCloud, ply_path, index_path) -> None:
    """ASCII PLY plus the JSON sidecar tying vertex order to grid keys."""
    lines = _ply_header(len(cloud), cloud.color is not None, None)
    lines += _vertex_lines(cloud.points, cloud.color)
    Path(ply_path).write_text("\n".join(lines) + "\n", encoding="ascii")
    write_json(index_path, {
        "schema": CLOUD_INDEX_SCHEMA,
        "resolution": [cloud.resolution[0], cloud.resolution[1]],
        "keys": [[int(x), int(y)] for x, y in cloud.keys],
        "support": [int(s) for s in cloud.support],
    })


def _parse_ply(path) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """ASCII PLY reader for the subset this package writes.

    Returns (vertices, colors or None, faces or None). Faces may mix arities;
    they come back as an object array of index lists only when ragged,
    otherwise as an (M, k) int array.
    """
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or text[0].strip() != "ply":
        raise FormatError(f"{path}: not a PLY file")
    n_vert = n_face = 0
    vert_props: list[str] = []
    in_vertex = False
    body_at = None
    for i, raw in enumerate(text[1:], start=1):
        line = raw.strip()
        if line == "end_header":
            body_at = i + 1
            break
        if line.startswith("comment"):
            continue
        if line.startswith("format"):
            if line.split() != ["format", "ascii", "1.0"]:
                raise FormatError(f"{path}: only ASCII PLY is supported")
        elif line.startswith("element vertex"):
            n_vert = int(line.split()[2])
            in_vertex = True
        elif line.startswith("element face"):
            n_face = int(line.split()[2])
            in_vertex = False
        elif line.startswith("property") and in_vertex:
            vert_props.append(line.split()[-1])
    if body_at is None:
        raise FormatError(f"{path}: missing end_header")
    with_color = "red" in vert_props
    body = text[body_at:]
    if len(body) < n_vert + n_face:
        raise FormatError(f"{path}: body has {len(body)} lines, "
                          f"expected {n_vert + n_face}")
    verts = np.empty((n_vert, 3), dtype=np.float64)
    colors = np.empty((n_vert, 3), dtype=np.uint8) if with_color else None
    for i in range(n_vert):
        parts = body[i].split()
        verts[i] = [float(v) for v in parts[:3]]
        if with_color:
            colors[i] = [int(v) for v in parts[3:6]]
    if n_face == 0:
        return verts, colors, None
    face_lists = []
    for i in range(n_vert, n_vert + n_face):
        parts = body[i].split()
        count = int(parts[0])
        if len(parts) != count + 1:
            raise FormatError(f"{path}: face line {i} arity mismatch")
        face_lists.append([int(v) for v in parts[1:]])
    arities = {len(f) for f in face_lists}
    if len(arities) == 1:
        faces = np.array(face_lists, dtype=np.int64)
    else:
        faces = np.empty(len(face_lists), dtype=object)
        faces[:] = face_lists
    return verts, colors, faces


def load_cloud(ply_path, index_path) -> GridCloud:
    verts, colors, faces = _parse_ply(ply_path)
    if faces is not None:
        raise FormatError(f"{ply_path}: expected a point cloud, found faces")
    index = read_json(index_path)
    _expect_schema(index, CLOUD_INDEX_SCHEMA, index_path)
    keys = np.asarray(index["keys"], dtype=np.int32).reshape(-1, 2)
    support = np.asarray(index["support"], dtype=np.int32)
    if keys.shape[0] != verts.shape[0] or support.shape[0] != verts.shape[0]:
        raise FormatError(f"{index_path}: sidecar does not match vertex count")
    res = index["resolution"]
    return GridCloud(resolution=(int(res[0]), int(res[1])), keys=keys,
                     points=verts, support=support, color=colors)


# ---------------------------------------------------------------------------
# Meshes

def save_mesh(mesh: GridMesh, path, fmt: str | None = None) -> None:
    """Write a mesh as ASCII PLY or OBJ; fmt defaults from the suffix."""
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt == "ply":
        lines = _ply_header(mesh.vertices.shape[0], mesh.color is not None,
                            mesh.faces.shape[0])
        lines += _vertex_lines(mesh.vertices, mesh.color)
        for face in mesh.faces:
            lines.append(str(len(face)) + " " + " ".join(str(int(v)) for v in face))
    elif fmt == "obj":
        lines = []
        for i in range(mesh.vertices.shape[0]):
            x, y, z = mesh.vertices[i]
            line = f"v {FLOAT_FMT % x} {FLOAT_FMT % y} {FLOAT_FMT % z}"
            if mesh.color is not None:
                r, g, b = (float(c) / 255.0 for c in mesh.color[i])
                line += f" {FLOAT_FMT % r} {FLOAT_FMT % g} {FLOAT_FMT % b}"
            lines.append(line)
        for face in mesh.faces:
            lines.append("f " + " ".join(str(int(v) + 1) for v in face))
    else:
        raise FormatError(f"unknown mesh format {fmt!r}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def load_mesh(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Read a mesh written by save_mesh.

    Returns (vertices, faces, colors or None) with 0-indexed faces.
    """
    path = Path(path)
    suffix = path.suffix.lstrip(".").lower()
    if suffix == "ply":
        verts, colors, faces = _parse_ply(path)
        if faces is None:
            faces = np.empty((0, 3), dtype=np.int64)
        return verts, faces, colors
    if suffix == "obj":
        return _parse_obj(path)
    raise FormatError(f"unknown mesh format {suffix!r}")


def _parse_obj(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    verts = []
    colors = []
    face_lists = []
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            vals = [float(v) for v in parts[1:]]
            if len(vals) not in (3, 6):
                raise FormatError(f"{path}: vertex line needs 3 or 6 numbers")
            verts.append(vals[:3])
            if len(vals) == 6:
                colors.append([int(round(c * 255.0)) for c in vals[3:]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            if len(idx) < 3:
                raise FormatError(f"{path}: face with fewer than 3 vertices")
            face_lists.append([i - 1 for i in idx])
    vert_arr = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    color_arr = None
    if colors:
        if len(colors) != len(verts):
            raise FormatError(f"{path}: only some vertices carry color")
        color_arr = np.asarray(colors, dtype=np.uint8)
    arities = {len(f) for f in face_lists}
    if not face_lists:
        faces = np.empty((0, 3), dtype=np.int64)
    elif len(arities) == 1:
        faces = np.asarray(face_lists, dtype=np.int64)
    else:
        faces = np.empty(len(face_lists), dtype=object)
        faces[:] = face_lists
    return vert_arr, faces, color_arr
