"""Binary little-endian PLY export/import for Gaussian scenes and point clouds.

Gaussian files use the layout standard splat viewers read: 17 required
float32 properties per vertex (x, y, z, nx, ny, nz, f_dc_0..2, opacity
logit, scale_0..2 log, rot_0..3 wxyz quaternion), plus one extra property
split_iter carrying the densification tag. Viewers ignore the extra;
import fills 0 when it is absent. Normals are written as zeros. Colors
are stored as degree-0 spherical-harmonic coefficients,
f_dc = (rgb - 0.5) / 0.2820948, the convention viewers reconstruct from.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from textsplat.errors import FormatError
from textsplat.geometry import PointCloud
from textsplat.splat import GaussianCloud

SH_C0 = 0.28209479177387814  # 1 / (2 sqrt(pi))

REQUIRED_PROPERTIES = (
    "x",
    "y",
    "z",
    "nx",
    "ny",
    "nz",
    "f_dc_0",
    "f_dc_1",
    "f_dc_2",
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
)


def _header(count: int, properties) -> bytes:
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {count}"]
    lines += [f"property float {name}" for name in properties]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def export_ply(cloud: GaussianCloud, path) -> None:
    n = len(cloud)
    body = np.zeros((n, len(REQUIRED_PROPERTIES) + 1), dtype="<f4")
    body[:, 0:3] = cloud.centers
    body[:, 6:9] = (cloud.colors - 0.5) / SH_C0
    body[:, 9] = cloud.opacity_logits
    body[:, 10:13] = cloud.log_scales
    body[:, 13:17] = cloud.rotations
    body[:, 17] = cloud.split_iteration
    data = _header(n, REQUIRED_PROPERTIES + ("split_iter",)) + body.tobytes()
    Path(path).write_bytes(data)


def _parse_header(data: bytes, path):
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    count = None
    properties = []
    element = None
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            element = parts[1]
            if element != "vertex":
                raise FormatError(f"{path}: unsupported element {element!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            if element != "vertex":
                raise FormatError(f"{path}: property outside vertex element")
            if parts[1] != "float":
                raise FormatError(f"{path}: property {parts[-1]!r} is not float32")
            properties.append(parts[2])
    if fmt != "binary_little_endian":
        raise FormatError(f"{path}: format {fmt!r} not supported (binary little-endian only)")
    if count is None:
        raise FormatError(f"{path}: missing vertex element")
    return count, properties, data[end + len(b"end_header\n") :]


def import_ply(path) -> GaussianCloud:
    """Read a splat PLY. The 17 viewer-standard properties are required in
    exact order; split_iter is optional and defaults to 0."""
    path = Path(path)
    count, properties, body = _parse_header(path.read_bytes(), path)
    base = tuple(properties[: len(REQUIRED_PROPERTIES)])
    if base != REQUIRED_PROPERTIES or len(properties) > len(REQUIRED_PROPERTIES) + 1:
        raise FormatError(f"{path}: property schema mismatch: {properties}")
    has_split = len(properties) == len(REQUIRED_PROPERTIES) + 1
    if has_split and properties[-1] != "split_iter":
        raise FormatError(f"{path}: unexpected extra property {properties[-1]!r}")
    width = len(properties)
    expected = count * width * 4
    if len(body) != expected:
        raise FormatError(f"{path}: body holds {len(body)} bytes, expected {expected}")
    rows = np.frombuffer(body, dtype="<f4").reshape(count, width).astype(np.float64)
    split = rows[:, 17].astype(np.int64) if has_split else np.zeros(count, dtype=np.int64)
    return GaussianCloud(
        centers=rows[:, 0:3],
        log_scales=rows[:, 10:13],
        rotations=rows[:, 13:17],
        opacity_logits=rows[:, 9],
        colors=rows[:, 6:9] * SH_C0 + 0.5,
        split_iteration=split,
    )


POINT_PROPERTIES = ("x", "y", "z", "red", "green", "blue")


def export_point_ply(cloud: PointCloud, path) -> None:
    """Plain colored point cloud: float32 positions, uint8 colors."""
    n = len(cloud)
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    lines += [f"property float {name}" for name in POINT_PROPERTIES[:3]]
    lines += [f"property uchar {name}" for name in POINT_PROPERTIES[3:]]
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")
    rec = np.dtype([("pos", "<f4", 3), ("rgb", "u1", 3)])
    body = np.zeros(n, dtype=rec)
    body["pos"] = cloud.positions
    body["rgb"] = np.clip(np.rint(cloud.colors * 255.0), 0, 255)
    Path(path).write_bytes(header + body.tobytes())


def import_point_ply(path) -> PointCloud:
    path = Path(path)
    data = path.read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii", errors="replace")
    if "format binary_little_endian" not in header:
        raise FormatError(f"{path}: binary little-endian only")
    count = None
    for line in header.splitlines():
        if line.startswith("element vertex"):
            count = int(line.split()[2])
    if count is None:
        raise FormatError(f"{path}: missing vertex element")
    rec = np.dtype([("pos", "<f4", 3), ("rgb", "u1", 3)])
    body = data[end + len(b"end_header\n") :]
    if len(body) != count * rec.itemsize:
        raise FormatError(f"{path}: truncated point data")
    rows = np.frombuffer(body, dtype=rec)
    return PointCloud(
        positions=rows["pos"].astype(np.float64),
        colors=rows["rgb"].astype(np.float64) / 255.0,
        source_view=np.zeros(count, dtype=np.int64),
    )
