"""Deterministic synthetic-scene oracle.

A parametric ground-truth scene (checkered ground plane, sky gradient,
axis-aligned boxes, spheres) rendered by exact per-pixel ray casting.
The world frame matches the initial camera: x right, y down, z forward;
the ground plane sits at positive y. Depth is camera-space z, and rays
that hit nothing (or would hit beyond the far bound) report the far
bound with the sky color, so every depth value is finite and bounded.

The oracle provider wraps the scene behind the generative contract:
outpaint/inpaint composite exact renders into the unknown region only,
and estimate_depth applies a seeded affine-plus-noise perturbation so
the alignment stage has real work to do.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from textsplat.errors import ContractViolationError, InvalidArgumentError
from textsplat.geometry import (
    CameraIntrinsics,
    CameraPose,
    ColorImage,
    DepthMap,
    PixelMask,
)
from textsplat.providers import CaptureContext, ProviderContract


@dataclass
class SyntheticSceneSpec:
    """Parametric scene. Build exact layouts directly or derive one from a
    seed with ``random``."""

    ground_y: float = 1.6
    ground_period: float = 1.5
    ground_color_a: np.ndarray = field(default_factory=lambda: np.array([0.82, 0.78, 0.72]))
    ground_color_b: np.ndarray = field(default_factory=lambda: np.array([0.35, 0.32, 0.30]))
    sky_horizon: np.ndarray = field(default_factory=lambda: np.array([0.85, 0.88, 0.92]))
    sky_zenith: np.ndarray = field(default_factory=lambda: np.array([0.25, 0.45, 0.80]))
    box_min: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    box_max: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    box_colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    sphere_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    sphere_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sphere_colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    far_bound: float = 60.0

    def __post_init__(self):
        for name in ("box_min", "box_max", "box_colors", "sphere_centers", "sphere_colors"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1, 3))
        self.sphere_radii = np.asarray(self.sphere_radii, dtype=np.float64).reshape(-1)
        if not (len(self.box_min) == len(self.box_max) == len(self.box_colors)):
            raise InvalidArgumentError("box field lengths disagree")
        if not (len(self.sphere_centers) == len(self.sphere_radii) == len(self.sphere_colors)):
            raise InvalidArgumentError("sphere field lengths disagree")
        if np.any(self.box_min >= self.box_max):
            raise InvalidArgumentError("boxes need box_min < box_max per axis")
        if np.any(self.sphere_radii <= 0):
            raise InvalidArgumentError("sphere radii must be > 0")
        if not self.far_bound > 0:
            raise InvalidArgumentError("far_bound must be > 0")

    @classmethod
    def random(cls, seed: int, n_boxes: int = 3, n_spheres: int = 3) -> "SyntheticSceneSpec":
        """Seeded scene: solids scattered on a ring around the origin so a
        rotating camera at the origin always stays outside them."""
        rng = np.random.default_rng(seed)
        total = n_boxes + n_spheres
        angles = rng.uniform(0, 2 * np.pi, total)
        dists = rng.uniform(3.5, 7.5, total)
        ground_y = 1.6
        box_min, box_max, box_colors = [], [], []
        for i in range(n_boxes):
            half = rng.uniform(0.3, 0.8, 3)
            center = np.array(
                [dists[i] * np.sin(angles[i]), ground_y - half[1], dists[i] * np.cos(angles[i])]
            )
            box_min.append(center - half)
            box_max.append(center + half)
            box_colors.append(rng.uniform(0.15, 0.9, 3))
        centers, radii, sphere_colors = [], [], []
        for i in range(n_boxes, n_boxes + n_spheres):
            r = rng.uniform(0.35, 0.9)
            centers.append(
                np.array(
                    [dists[i] * np.sin(angles[i]), ground_y - r, dists[i] * np.cos(angles[i])]
                )
            )
            radii.append(r)
            sphere_colors.append(rng.uniform(0.15, 0.9, 3))
        return cls(
            ground_y=ground_y,
            ground_period=float(rng.uniform(1.0, 2.0)),
            box_min=np.array(box_min).reshape(-1, 3),
            box_max=np.array(box_max).reshape(-1, 3),
            box_colors=np.array(box_colors).reshape(-1, 3),
            sphere_centers=np.array(centers).reshape(-1, 3),
            sphere_radii=np.array(radii),
            sphere_colors=np.array(sphere_colors).reshape(-1, 3),
        )


def _camera_inside_solid(spec: SyntheticSceneSpec, center: np.ndarray) -> bool:
    for m, M in zip(spec.box_min, spec.box_max):
        if np.all(center > m) and np.all(center < M):
            return True
    for s, r in zip(spec.sphere_centers, spec.sphere_radii):
        if np.linalg.norm(center - s) < r:
            return True
    return False


def oracle_render(
    spec: SyntheticSceneSpec, pose: CameraPose, intr: CameraIntrinsics
) -> tuple[ColorImage, DepthMap]:
    """Exact ray-cast RGB and z-depth. Rays are parameterized so the ray
    parameter equals camera-space z; nearest surface within the far bound
    wins, otherwise the pixel shows sky at far-bound depth."""
    origin = pose.camera_center
    if _camera_inside_solid(spec, origin):
        raise InvalidArgumentError("camera center lies inside a scene solid")
    us, vs = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    dirs_cam = np.stack(
        [(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones_like(us, dtype=np.float64)],
        axis=-1,
    )
    dirs = dirs_cam.reshape(-1, 3) @ pose.rotation  # rows: R^T * dir_cam
    n = len(dirs)

    best_t = np.full(n, spec.far_bound)
    color = np.empty((n, 3))
    upness = np.clip(-dirs[:, 1] / np.linalg.norm(dirs, axis=1), 0.0, 1.0)
    color[:] = spec.sky_horizon + upness[:, None] * (spec.sky_zenith - spec.sky_horizon)

    def consider(t: np.ndarray, hit_color: np.ndarray) -> None:
        better = (t > 0) & (t < best_t)
        best_t[better] = t[better]
        color[better] = hit_color[better] if hit_color.ndim == 2 else hit_color

    # ground plane y = ground_y with checker texture in x-z
    dy = dirs[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = np.where(np.abs(dy) > 1e-12, (spec.ground_y - origin[1]) / dy, np.inf)
    t_hit = np.where(np.isfinite(t_plane), t_plane, 0.0)
    hit = origin[None, :] + t_hit[:, None] * dirs
    parity = (
        np.floor(hit[:, 0] / spec.ground_period) + np.floor(hit[:, 2] / spec.ground_period)
    ) % 2
    plane_color = np.where(parity[:, None] == 0, spec.ground_color_a, spec.ground_color_b)
    consider(t_plane, plane_color)

    for m, M, c in zip(spec.box_min, spec.box_max, spec.box_colors):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (m[None, :] - origin[None, :]) / dirs
            t2 = (M[None, :] - origin[None, :]) / dirs
        parallel = np.abs(dirs) < 1e-12
        inside_slab = (origin[None, :] > m) & (origin[None, :] < M)
        lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
        hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = lo.max(axis=1)
        t_far = hi.min(axis=1)
        t_box = np.where((t_near <= t_far) & (t_near > 0), t_near, np.inf)
        consider(t_box, c)

    for s, r, c in zip(spec.sphere_centers, spec.sphere_radii, spec.sphere_colors):
        oc = origin - s
        a = np.einsum("nd,nd->n", dirs, dirs)
        b = 2.0 * dirs @ oc
        disc = b * b - 4.0 * a * (oc @ oc - r * r)
        root = np.sqrt(np.maximum(disc, 0.0))
        t_sph = np.where(disc >= 0, (-b - root) / (2.0 * a), np.inf)
        consider(t_sph, c)

    h, w = intr.height, intr.width
    return (
        ColorImage(np.clip(color.reshape(h, w, 3), 0.0, 1.0)),
        DepthMap(best_t.reshape(h, w)),
    )


@dataclass(frozen=True)
class DepthPerturbation:
    """Affine-plus-noise corruption of true depth: a * D + b + N(0, sigma^2)."""

    a: float = 1.0
    b: float = 0.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidArgumentError("perturbation scale a must be > 0")
        if self.sigma < 0:
            raise InvalidArgumentError("perturbation sigma must be >= 0")


def _pose_key(pose: CameraPose) -> int:
    digest = hashlib.blake2b(
        pose.rotation.tobytes() + pose.translation.tobytes(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


class _OracleProvider(ProviderContract):
    """Contract implementation backed by the exact scene. Every call needs
    the capture context naming the camera behind the request image."""

    def __init__(self, spec: SyntheticSceneSpec, perturb: DepthPerturbation):
        super().__init__()
        self.spec = spec
        self.perturb = perturb

    def _require_context(self) -> CaptureContext:
        if self._context is None:
            raise ContractViolationError("oracle provider called without a capture context")
        return self._context

    def text2image(self, prompt: str, width: int, height: int, seed: int) -> ColorImage:
        ctx = self._require_context()
        if (ctx.intrinsics.width, ctx.intrinsics.height) != (width, height):
            raise ContractViolationError(
                "capture context dimensions do not match the text2image request"
            )
        image, _ = oracle_render(self.spec, ctx.pose, ctx.intrinsics)
        return image

    def _fill_unknown(self, image: ColorImage, known_mask: PixelMask) -> ColorImage:
        ctx = self._require_context()
        truth, _ = oracle_render(self.spec, ctx.pose, ctx.intrinsics)
        return ColorImage(
            np.where(known_mask.values[:, :, None], image.values, truth.values)
        )

    def outpaint(self, prompt, image, known_mask, seed) -> ColorImage:
        return self._fill_unknown(image, known_mask)

    def inpaint(self, prompt, image, known_mask, seed) -> ColorImage:
        return self._fill_unknown(image, known_mask)

    def estimate_depth(self, image: ColorImage) -> DepthMap:
        ctx = self._require_context()
        _, depth = oracle_render(self.spec, ctx.pose, ctx.intrinsics)
        values = self.perturb.a * depth.values + self.perturb.b
        if self.perturb.sigma > 0:
            rng = np.random.default_rng([self.perturb.seed, _pose_key(ctx.pose)])
            values = values + rng.normal(0.0, self.perturb.sigma, values.shape)
        return DepthMap(np.maximum(values, 1e-3))

    def superresolve(self, image: ColorImage, scale: int) -> ColorImage:
        ctx = self._require_context()
        out, _ = oracle_render(self.spec, ctx.pose, ctx.intrinsics.scaled(scale))
        return out


def oracle_provider(
    spec: SyntheticSceneSpec, perturb: DepthPerturbation | None = None
) -> _OracleProvider:
    return _OracleProvider(spec, perturb or DepthPerturbation())
