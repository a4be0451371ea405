"""Cameras, projection, point-cloud growth and depth alignment.

Conventions used throughout the package:

- right-handed camera frame, looking down +z, x right, y down;
- extrinsics are world-to-camera: ``cam = R @ world + t``;
- depth means camera-frame z (not ray length);
- pixel (u, v) = (column, row) samples the continuous point (u, v),
  i.e. pixel centers sit at integer coordinates;
- masks are True where a pixel is KNOWN/visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DegenerateAlignmentError, InvalidArgumentError

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "DepthMap",
    "ColorImage",
    "PixelMask",
    "PointCloud",
    "AlignmentParams",
    "intrinsics_from_fov",
    "unproject",
    "render_points",
    "align_depth",
    "fuse_points",
    "prune_stretched",
    "dilate_mask",
]

_ORTHONORMAL_TOL = 1e-9


@dataclass
class CameraIntrinsics:
    """Pinhole intrinsics shared by every synthetic view."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidArgumentError("image dimensions must be >= 1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgumentError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 K matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def scaled(self, factor: int) -> "CameraIntrinsics":
        """Intrinsics of the same camera at ``factor``-times the resolution."""
        return CameraIntrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            width=self.width * factor,
            height=self.height * factor,
        )


@dataclass
class CameraPose:
    """World-to-camera extrinsics: ``cam = rotation @ world + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.rotation.shape != (3, 3):
            raise InvalidArgumentError("rotation must be 3x3")
        if np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))) > _ORTHONORMAL_TOL:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > _ORTHONORMAL_TOL:
            raise InvalidArgumentError("rotation must have determinant +1")

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates (-R^T t)."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation


@dataclass
class DepthMap:
    """Per-pixel z-depth in meters.

    Values must be finite and positive. Rendered depth buffers use +inf as
    the "no point landed here" sentinel and are built through
    :meth:`with_sentinel`.
    """

    values: np.ndarray
    allow_infinite: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidArgumentError("depth map must be HxW")
        if np.any(self.values <= 0) or np.any(np.isnan(self.values)):
            raise InvalidArgumentError("depth values must be positive and not NaN")
        if not self.allow_infinite and not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("depth values must be finite")

    @classmethod
    def with_sentinel(cls, values: np.ndarray) -> "DepthMap":
        return cls(values, allow_infinite=True)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class ColorImage:
    """HxWx3 RGB raster with channels in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise InvalidArgumentError("image must be HxWx3")
        if np.any(self.values < 0) or np.any(self.values > 1) or np.any(np.isnan(self.values)):
            raise InvalidArgumentError("image channels must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class PixelMask:
    """HxW boolean raster; True marks a KNOWN/visible pixel."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=bool)
        if self.values.ndim != 2:
            raise InvalidArgumentError("mask must be HxW")

    @classmethod
    def full(cls, height: int, width: int, value: bool = True) -> "PixelMask":
        return cls(np.full((height, width), value, dtype=bool))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def true_count(self) -> int:
        return int(np.count_nonzero(self.values))


@dataclass
class PointCloud:
    """Colored world-space points, tagged with the anchor view that created them."""

    positions: np.ndarray
    colors: np.ndarray
    source_view: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.source_view = np.asarray(self.source_view, dtype=np.int64).reshape(-1)
        if not (len(self.positions) == len(self.colors) == len(self.source_view)):
            raise InvalidArgumentError("point cloud field lengths disagree")
        if not np.all(np.isfinite(self.positions)):
            raise InvalidArgumentError("point positions must be finite")

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class AlignmentParams:
    """Affine depth correction: aligned = scale * estimated + shift."""

    scale: float
    shift: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and math.isfinite(self.shift)):
            raise InvalidArgumentError("alignment parameters must be finite")


def intrinsics_from_fov(fov_deg: float, width: int, height: int) -> CameraIntrinsics:
    """Build square-pixel intrinsics from a vertical field of view.

    fy = (height/2) / tan(fov/2), fx = fy, principal point at the image
    center.
    """
    if not 0 < fov_deg < 180:
        raise InvalidArgumentError(f"fov must lie in (0, 180), got {fov_deg}")
    if width < 1 or height < 1:
        raise InvalidArgumentError("image dimensions must be >= 1")
    fy = (height / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return CameraIntrinsics(fx=fy, fy=fy, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def _check_raster_dims(*rasters) -> tuple[int, int]:
    shapes = {(r.height, r.width) for r in rasters}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"raster dimensions disagree: {sorted(shapes)}")
    return shapes.pop()


def unproject(
    depth: DepthMap,
    image: ColorImage,
    mask: PixelMask,
    pose: CameraPose,
    intr: CameraIntrinsics,
    view_index: int,
) -> PointCloud:
    """Lift every mask-true pixel to a colored world-space point.

    Points come out in row-major pixel order. Pixel (u, v) at depth z maps
    to the camera point ((u-cx)z/fx, (v-cy)z/fy, z).
    """
    h, w = _check_raster_dims(depth, image, mask)
    if (h, w) != (intr.height, intr.width):
        raise InvalidArgumentError("raster dimensions do not match intrinsics")
    vs, us = np.nonzero(mask.values)
    z = depth.values[vs, us]
    cam = np.empty((len(us), 3))
    cam[:, 0] = (us - intr.cx) * z / intr.fx
    cam[:, 1] = (vs - intr.cy) * z / intr.fy
    cam[:, 2] = z
    world = pose.camera_to_world(cam)
    colors = image.values[vs, us]
    src = np.full(len(us), view_index, dtype=np.int64)
    return PointCloud(world, colors, src)


def render_points(
    cloud: PointCloud,
    pose: CameraPose,
    intr: CameraIntrinsics,
    point_radius_px: int,
    z_near: float = 1e-6,
) -> tuple[ColorImage, PixelMask, DepthMap]:
    """Z-buffered square-splat rendering of a point cloud.

    Each point in front of ``z_near`` paints a filled square of Chebyshev
    radius ``point_radius_px`` around its projected pixel; the nearest
    point wins each pixel, ties broken by lower point index. Returns the
    rendered image, the coverage mask and the winning depth (+inf where
    nothing landed).
    """
    if point_radius_px < 0:
        raise InvalidArgumentError("point radius must be >= 0")
    h, w = intr.height, intr.width
    img = np.zeros((h, w, 3))
    zbuf = np.full((h, w), np.inf)
    covered = np.zeros((h, w), dtype=bool)
    if len(cloud) == 0:
        return ColorImage(img), PixelMask(covered), DepthMap.with_sentinel(zbuf)

    cam = pose.world_to_camera(cloud.positions)
    z = cam[:, 2]
    front = z > z_near
    if not np.any(front):
        return ColorImage(img), PixelMask(covered), DepthMap.with_sentinel(zbuf)
    idx = np.nonzero(front)[0]
    z = z[front]
    u = np.rint(intr.fx * cam[front, 0] / z + intr.cx).astype(np.int64)
    v = np.rint(intr.fy * cam[front, 1] / z + intr.cy).astype(np.int64)

    r = int(point_radius_px)
    side = 2 * r + 1
    du, dv = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1))
    uu = (u[:, None] + du.ravel()[None, :]).ravel()
    vv = (v[:, None] + dv.ravel()[None, :]).ravel()
    zz = np.repeat(z, side * side)
    ii = np.repeat(idx, side * side)
    ok = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
    uu, vv, zz, ii = uu[ok], vv[ok], zz[ok], ii[ok]
    if len(uu) == 0:
        return ColorImage(img), PixelMask(covered), DepthMap.with_sentinel(zbuf)

    flat = vv * w + uu
    # Sort by pixel, then depth, then original index: the first entry per
    # pixel is the z-buffer winner with the documented tie-break.
    order = np.lexsort((ii, zz, flat))
    flat, zz, ii = flat[order], zz[order], ii[order]
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    flat, zz, ii = flat[first], zz[first], ii[first]

    vs, us = np.divmod(flat, w)
    img[vs, us] = cloud.colors[ii]
    zbuf[vs, us] = zz
    covered[vs, us] = True
    return ColorImage(img), PixelMask(covered), DepthMap.with_sentinel(zbuf)


def align_depth(
    estimated: DepthMap,
    reference: DepthMap,
    overlap: PixelMask,
) -> tuple[AlignmentParams, DepthMap]:
    """Least-squares affine fit of estimated depth onto reference depth.

    Solves min_{s,b} sum_overlap (s*D + b - D0)^2 in closed form and
    applies D' = s*D + b to the whole estimated map. Raises
    DegenerateAlignmentError when fewer than two overlap pixels exist or
    the estimated depth has no variance over the overlap.
    """
    _check_raster_dims(estimated, reference, overlap)
    sel = overlap.values
    n = int(np.count_nonzero(sel))
    if n < 2:
        raise DegenerateAlignmentError(f"need >= 2 overlap pixels, got {n}")
    d = estimated.values[sel]
    d0 = reference.values[sel]
    d_mean = d.mean()
    d0_mean = d0.mean()
    dc = d - d_mean
    # Centered normal equations; algebraically equal to
    # s = (n*sum(D*D0) - sum(D)*sum(D0)) / (n*sum(D^2) - sum(D)^2).
    denom = float(np.dot(dc, dc))
    if denom <= 1e-18 * n * max(d_mean * d_mean, 1.0):
        raise DegenerateAlignmentError("estimated depth is constant over the overlap")
    s = float(np.dot(dc, d0 - d0_mean)) / denom
    b = d0_mean - s * d_mean
    aligned = s * estimated.values + b
    return AlignmentParams(scale=s, shift=b), DepthMap(aligned)


def fuse_points(
    cloud: PointCloud,
    aligned_depth: DepthMap,
    image: ColorImage,
    new_mask: PixelMask,
    pose: CameraPose,
    intr: CameraIntrinsics,
    view_index: int,
) -> PointCloud:
    """Append the unprojection of the newly generated region to the cloud.

    Existing points are copied bit-identically; only new_mask-true pixels
    contribute new points.
    """
    fresh = unproject(aligned_depth, image, new_mask, pose, intr, view_index)
    return PointCloud(
        np.concatenate([cloud.positions, fresh.positions]),
        np.concatenate([cloud.colors, fresh.colors]),
        np.concatenate([cloud.source_view, fresh.source_view]),
    )


def nearest_neighbor_distances(positions: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to its nearest other point."""
    tree = cKDTree(positions)
    dist, _ = tree.query(positions, k=2)
    return dist[:, 1]


def prune_stretched(cloud: PointCloud) -> PointCloud:
    """Drop points whose nearest-neighbor distance is > mean + 2 std.

    Statistics (population std) are computed once over the input cloud.
    Clouds with fewer than 3 points pass through unchanged.
    """
    if len(cloud) < 3:
        return cloud
    d = nearest_neighbor_distances(cloud.positions)
    threshold = d.mean() + 2.0 * d.std()
    keep = d <= threshold
    return PointCloud(cloud.positions[keep], cloud.colors[keep], cloud.source_view[keep])


def dilate_mask(mask: PixelMask, radius_px: int) -> PixelMask:
    """Grow the FALSE (unknown) region by a Chebyshev radius.

    Output is True exactly where every pixel within the square
    neighborhood is True; pixels outside the image count as True, so an
    all-true mask stays all-true.
    """
    if radius_px < 0:
        raise InvalidArgumentError("dilation radius must be >= 0")
    if radius_px == 0:
        return PixelMask(mask.values.copy())
    side = 2 * int(radius_px) + 1
    eroded = ndimage.binary_erosion(
        mask.values, structure=np.ones((side, side), dtype=bool), border_value=1
    )
    return PixelMask(eroded)
