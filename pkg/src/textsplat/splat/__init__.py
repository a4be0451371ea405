"""3D Gaussian scene representation and differentiable CPU rasterizer.

A scene is a set of anisotropic 3D Gaussians, each carrying a center
(meters), per-axis log scale, unit quaternion (w, x, y, z), opacity logit
and an RGB color. Rendering projects every Gaussian to an elliptical
screen-space footprint and composites front to back:

    alpha_i' = min(0.99, sigmoid(logit_i) * exp(-0.5 d^T cov2d^{-1} d))
    C <- C + T * alpha_i' * c_i,   T <- T * (1 - alpha_i')

stopping once T drops below ``eps_t`` and skipping contributions below
1/255. Footprints are bounded at three standard deviations of cov2d.
``rasterize_gradients`` replays compositing back to front and returns
analytic gradients for all five parameter groups.

Two interchangeable kernel backends exist: a compiled extension
(parallel over pixel-row blocks, bitwise independent of thread count)
and a pure NumPy fallback. Selection is automatic, overridable via
``set_backend`` or the TEXTSPLAT_BACKEND environment variable
("compiled", "python", "auto").
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from textsplat.errors import InvalidArgumentError
from textsplat.geometry import CameraIntrinsics, CameraPose, ColorImage, PixelMask, PointCloud
from textsplat.splat import _python
from textsplat.splat._projection import backpropagate_projection, project_gaussians

try:
    from textsplat.splat import _kernels

    _COMPILED_AVAILABLE = True
except ImportError:
    _kernels = None
    _COMPILED_AVAILABLE = False

__all__ = [
    "GaussianPrimitive",
    "GaussianCloud",
    "RenderSettings",
    "RenderOutput",
    "GradientBundle",
    "init_from_points",
    "project_to_screen",
    "rasterize",
    "rasterize_gradients",
    "coverage_mask",
    "active_backend",
    "set_backend",
    "compiled_available",
    "get_num_threads",
    "set_num_threads",
]

IDENTITY_QUATERNION = np.array([1.0, 0.0, 0.0, 0.0])

_backend_choice = os.environ.get("TEXTSPLAT_BACKEND", "auto").strip().lower()
_num_threads = 1


def compiled_available() -> bool:
    return _COMPILED_AVAILABLE


def active_backend() -> str:
    """Name of the backend the next rasterize call will use."""
    if _backend_choice == "python":
        return "python"
    if _backend_choice == "compiled":
        if not _COMPILED_AVAILABLE:
            raise InvalidArgumentError("compiled backend requested but the extension is not built")
        return "compiled"
    return "compiled" if _COMPILED_AVAILABLE else "python"


def set_backend(name: str) -> None:
    """Select the kernel backend: "compiled", "python" or "auto"."""
    global _backend_choice
    if name not in ("compiled", "python", "auto"):
        raise InvalidArgumentError(f"unknown backend {name!r}")
    if name == "compiled" and not _COMPILED_AVAILABLE:
        raise InvalidArgumentError("compiled backend requested but the extension is not built")
    _backend_choice = name


def get_num_threads() -> int:
    return _num_threads


def set_num_threads(n: int) -> None:
    """Worker count for the compiled forward pass. Output is bitwise
    independent of this setting; it only affects speed."""
    global _num_threads
    if n < 1:
        raise InvalidArgumentError("thread count must be >= 1")
    _num_threads = int(n)


@dataclass
class GaussianPrimitive:
    """One anisotropic 3D Gaussian. Scale is exp(log_scale), opacity is
    sigmoid(opacity_logit), rotation is a unit quaternion (w, x, y, z)."""

    center: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    color: np.ndarray


class GaussianCloud:
    """A Gaussian scene stored as parallel arrays.

    split_iteration tags each primitive with the training iteration that
    created it by densification (0 for initial primitives).
    """

    def __init__(
        self,
        centers: np.ndarray,
        log_scales: np.ndarray,
        rotations: np.ndarray,
        opacity_logits: np.ndarray,
        colors: np.ndarray,
        split_iteration: np.ndarray | None = None,
    ):
        centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
        n = len(centers)
        self.centers = centers
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.ascontiguousarray(opacity_logits, dtype=np.float64).reshape(n)
        self.colors = np.ascontiguousarray(colors, dtype=np.float64).reshape(n, 3)
        if split_iteration is None:
            split_iteration = np.zeros(n, dtype=np.int64)
        self.split_iteration = np.ascontiguousarray(split_iteration, dtype=np.int64).reshape(n)
        if np.any(self.split_iteration < 0):
            raise InvalidArgumentError("split_iteration tags must be >= 0")
        for name in ("centers", "log_scales", "rotations", "opacity_logits", "colors"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidArgumentError(f"{name} must be finite")

    def __len__(self) -> int:
        return len(self.centers)

    @classmethod
    def empty(cls) -> "GaussianCloud":
        return cls(
            np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3))
        )

    @classmethod
    def from_primitives(
        cls, primitives: list[GaussianPrimitive], split_iteration=None
    ) -> "GaussianCloud":
        if not primitives:
            return cls.empty()
        return cls(
            np.array([p.center for p in primitives]),
            np.array([p.log_scale for p in primitives]),
            np.array([p.rotation for p in primitives]),
            np.array([p.opacity_logit for p in primitives]),
            np.array([p.color for p in primitives]),
            split_iteration,
        )

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            center=self.centers[i].copy(),
            log_scale=self.log_scales[i].copy(),
            rotation=self.rotations[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            color=self.colors[i].copy(),
        )

    @property
    def primitives(self) -> list[GaussianPrimitive]:
        return [self.primitive(i) for i in range(len(self))]

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.centers.copy(),
            self.log_scales.copy(),
            self.rotations.copy(),
            self.opacity_logits.copy(),
            self.colors.copy(),
            self.split_iteration.copy(),
        )

    def select(self, index) -> "GaussianCloud":
        """Subset cloud by boolean mask or integer index array."""
        return GaussianCloud(
            self.centers[index],
            self.log_scales[index],
            self.rotations[index],
            self.opacity_logits[index],
            self.colors[index],
            self.split_iteration[index],
        )

    @property
    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logits))


@dataclass(frozen=True)
class RenderSettings:
    """Rasterization controls. eps_t is the transmittance floor at which
    front-to-back compositing stops."""

    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # projected covariance grows like 1/t_z^2, so a generous near plane keeps
    # splats straddling the camera from smearing across the whole frame
    z_near: float = 0.2
    eps_t: float = 1e-4

    def __post_init__(self):
        bg = np.asarray(self.background, dtype=np.float64).reshape(3)
        if np.any(bg < 0) or np.any(bg > 1):
            raise InvalidArgumentError("background channels must lie in [0, 1]")
        object.__setattr__(self, "background", bg)
        if not self.z_near > 0:
            raise InvalidArgumentError("z_near must be > 0")
        if not (0 < self.eps_t <= 0.1):
            raise InvalidArgumentError("eps_t must lie in (0, 0.1]")


@dataclass
class RenderOutput:
    """image with background composited in, accumulated opacity per pixel,
    and alpha-weighted expected depth (diagnostic)."""

    image: ColorImage
    alpha_acc: np.ndarray
    depth_exp: np.ndarray


@dataclass
class GradientBundle:
    """Per-primitive loss gradients plus densification statistics:
    accumulated screen-space positional gradient magnitude and the number
    of pixels each primitive contributed to."""

    d_centers: np.ndarray
    d_log_scales: np.ndarray
    d_rotations: np.ndarray
    d_opacity_logits: np.ndarray
    d_colors: np.ndarray
    screen_grad_norm: np.ndarray
    touch_count: np.ndarray


def init_from_points(cloud: PointCloud) -> GaussianCloud:
    """Seed one Gaussian per point: opacity 0.5, spherical shape with
    radius the mean distance to the 3 nearest neighbors (clamped to
    [1e-4, 1] m), identity rotation."""
    n = len(cloud)
    if n == 0:
        raise InvalidArgumentError("cannot initialize Gaussians from an empty point cloud")
    positions = np.ascontiguousarray(cloud.positions, dtype=np.float64)
    k = min(3, n - 1)
    if k == 0:
        scales = np.full(n, 1e-4)
    else:
        tree = cKDTree(positions)
        dist, _ = tree.query(positions, k=k + 1)
        scales = np.clip(dist[:, 1:].mean(axis=1), 1e-4, 1.0)
    return GaussianCloud(
        centers=positions.copy(),
        log_scales=np.log(scales)[:, None].repeat(3, axis=1),
        rotations=np.tile(IDENTITY_QUATERNION, (n, 1)),
        opacity_logits=np.zeros(n),
        colors=np.asarray(cloud.colors, dtype=np.float64).copy(),
    )


def project_to_screen(
    g: GaussianPrimitive, pose: CameraPose, intr: CameraIntrinsics, z_near: float = 0.2
):
    """Project one Gaussian. Returns (mean2d, cov2d 2x2, depth) or None
    when the center sits at or behind the near plane."""
    proj = project_gaussians(
        g.center[None, :],
        g.log_scale[None, :],
        g.rotation[None, :],
        np.array([g.opacity_logit]),
        pose.rotation,
        pose.translation,
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        intr.width,
        intr.height,
        z_near,
        footprint_sigma=None,
    )
    if not proj.valid[0]:
        return None
    a, b, c = proj.cov2d[0]
    return proj.mean2d[0].copy(), np.array([[a, b], [b, c]]), float(proj.depth[0])


def _kernel_module():
    return _kernels if active_backend() == "compiled" else _python


def _project_for_render(cloud, pose, intr, settings, footprint_sigma):
    return project_gaussians(
        cloud.centers,
        cloud.log_scales,
        cloud.rotations,
        cloud.opacity_logits,
        pose.rotation,
        pose.translation,
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        intr.width,
        intr.height,
        settings.z_near,
        footprint_sigma=footprint_sigma,
    )


def rasterize(
    cloud: GaussianCloud,
    pose: CameraPose,
    intr: CameraIntrinsics,
    settings: RenderSettings,
    *,
    footprint_sigma: float | None = 3.0,
    transmittance_stop: bool = True,
    alpha_skip: float = 1.0 / 255.0,
) -> RenderOutput:
    """Render the cloud from one camera. The keyword arguments expose the
    performance cutoffs so tests can disable them; defaults are the
    production behavior."""
    h, w = intr.height, intr.width
    if len(cloud) == 0:
        image = np.broadcast_to(settings.background, (h, w, 3)).copy()
        return RenderOutput(ColorImage(image), np.zeros((h, w)), np.zeros((h, w)))
    proj = _project_for_render(cloud, pose, intr, settings, footprint_sigma)
    c_acc, t_buf, d_acc, _ = _kernel_module().forward(
        proj.order,
        proj.mean2d,
        proj.conic,
        proj.alpha,
        cloud.colors,
        proj.depth,
        proj.bbox,
        h,
        w,
        settings.eps_t,
        alpha_skip,
        transmittance_stop,
        _num_threads,
    )
    image = np.clip(c_acc + t_buf[:, :, None] * settings.background, 0.0, 1.0)
    return RenderOutput(ColorImage(image), 1.0 - t_buf, d_acc)


def rasterize_gradients(
    cloud: GaussianCloud,
    pose: CameraPose,
    intr: CameraIntrinsics,
    settings: RenderSettings,
    pixel_loss_grads: np.ndarray,
    *,
    footprint_sigma: float | None = 3.0,
    transmittance_stop: bool = True,
    alpha_skip: float = 1.0 / 255.0,
) -> GradientBundle:
    """Backward pass of rasterize. pixel_loss_grads holds dL/dpixel for the
    un-clipped composited image; returns dL for every parameter group along
    with per-primitive screen-gradient magnitudes and touch counts."""
    h, w = intr.height, intr.width
    pixel_loss_grads = np.ascontiguousarray(pixel_loss_grads, dtype=np.float64)
    if pixel_loss_grads.shape != (h, w, 3):
        raise InvalidArgumentError(
            f"pixel_loss_grads shape {pixel_loss_grads.shape} does not match raster {(h, w, 3)}"
        )
    n = len(cloud)
    zeros = GradientBundle(
        np.zeros((n, 3)),
        np.zeros((n, 3)),
        np.zeros((n, 4)),
        np.zeros(n),
        np.zeros((n, 3)),
        np.zeros(n),
        np.zeros(n, dtype=np.int64),
    )
    if n == 0:
        return zeros
    proj = _project_for_render(cloud, pose, intr, settings, footprint_sigma)
    kern = _kernel_module()
    _, t_buf, _, last = kern.forward(
        proj.order,
        proj.mean2d,
        proj.conic,
        proj.alpha,
        cloud.colors,
        proj.depth,
        proj.bbox,
        h,
        w,
        settings.eps_t,
        alpha_skip,
        transmittance_stop,
        _num_threads,
    )
    suffix = np.ascontiguousarray(t_buf[:, :, None] * settings.background)
    t_run = t_buf.copy()
    g_mean2d, g_conic, g_alpha, g_colors, touch = kern.backward(
        proj.order,
        proj.mean2d,
        proj.conic,
        proj.alpha,
        cloud.colors,
        proj.bbox,
        pixel_loss_grads,
        suffix,
        t_run,
        last,
        alpha_skip,
    )
    d_centers, d_log_scales, d_rotations, d_logits = backpropagate_projection(
        proj, pose.rotation, intr.fx, intr.fy, g_mean2d, g_conic, g_alpha
    )
    return GradientBundle(
        d_centers,
        d_log_scales,
        d_rotations,
        d_logits,
        g_colors,
        np.hypot(g_mean2d[:, 0], g_mean2d[:, 1]),
        touch,
    )


def coverage_mask(out: RenderOutput, alpha_threshold: float) -> PixelMask:
    """Pixels whose accumulated opacity reaches the threshold count as
    covered (known)."""
    if not (0 < alpha_threshold < 1):
        raise InvalidArgumentError("alpha_threshold must lie in (0, 1)")
    return PixelMask(out.alpha_acc >= alpha_threshold)
