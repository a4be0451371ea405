"""Training objective, optimizer, adaptive density control, training loop.

The objective is L = lambda * L1 + (1 - lambda) * (1 - SSIM) between the
render and the target, computed over supervision-true pixels. Training
runs Adam with per-group learning rates, renormalizes quaternions every
step, and periodically densifies (clone small / split large primitives
whose screen-space positional gradients stay high) and prunes nearly
transparent primitives. Runs are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from textsplat.errors import InvalidArgumentError
from textsplat.geometry import CameraIntrinsics, CameraPose, ColorImage, PixelMask
from textsplat.metrics import psnr
from textsplat.splat import (
    GaussianCloud,
    RenderSettings,
    rasterize,
    rasterize_gradients,
)


@dataclass(frozen=True)
class LossConfig:
    """Weights and SSIM constants on the [0, 1] dynamic range."""

    lambda_weight: float = 0.8
    window_size: int = 11
    window_sigma: float = 1.5
    c1: float = 0.01**2
    c2: float = 0.03**2

    def __post_init__(self):
        if not 0 <= self.lambda_weight <= 1:
            raise InvalidArgumentError("lambda_weight must lie in [0, 1]")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise InvalidArgumentError("window_size must be odd and positive")


@dataclass(frozen=True)
class OptimizerConfig:
    """Per-group Adam learning rates. The center rate decays exponentially
    to center_lr_final_factor of its initial value over the run."""

    lr_opacity: float = 0.05
    lr_log_scale: float = 0.005
    lr_rotation: float = 0.001
    lr_center: float = 1.6e-4
    lr_color: float = 2.5e-3
    center_lr_final_factor: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    max_iterations: int = 1000

    def __post_init__(self):
        for name in ("lr_opacity", "lr_log_scale", "lr_rotation", "lr_center", "lr_color"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if self.max_iterations < 0:
            raise InvalidArgumentError("max_iterations must be >= 0")


@dataclass(frozen=True)
class DensifyConfig:
    """Density-control schedule. densify_until None means 0.8 * max_iterations."""

    interval: int = 100
    grad_threshold: float = 2e-4
    split_scale_threshold: float = 0.01
    split_factor: float = 1.6
    opacity_prune_floor: float = 0.005
    densify_until: int | None = None

    def __post_init__(self):
        if self.interval < 1:
            raise InvalidArgumentError("interval must be >= 1")
        if not (self.grad_threshold > 0 and self.split_scale_threshold > 0):
            raise InvalidArgumentError("densify thresholds must be > 0")


@dataclass
class DensifyStats:
    """Accumulated between densification events: summed screen-space
    positional gradient magnitude, summed world-space center gradient
    (clone offset direction), and the number of steps each primitive
    contributed to at least one pixel."""

    accum_screen_norm: np.ndarray
    accum_center_grad: np.ndarray
    steps_touched: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "DensifyStats":
        return cls(np.zeros(n), np.zeros((n, 3)), np.zeros(n, dtype=np.int64))

    def add(self, bundle) -> None:
        touched = bundle.touch_count > 0
        self.accum_screen_norm += bundle.screen_grad_norm
        self.accum_center_grad += bundle.d_centers
        self.steps_touched += touched

    def mean_screen_grad(self) -> np.ndarray:
        steps = np.maximum(self.steps_touched, 1)
        return np.where(self.steps_touched > 0, self.accum_screen_norm / steps, 0.0)


@dataclass
class DensifyEvent:
    """One densification: counts plus per-child parent geometry, enough to
    audit that children stay within 3x the parent's largest scale."""

    iteration: int
    n_cloned: int
    n_split: int
    parent_centers: np.ndarray
    parent_max_scales: np.ndarray
    child_centers: np.ndarray


@dataclass
class TrainReport:
    loss_per_iteration: list[float] = field(default_factory=list)
    primitive_counts: list[int] = field(default_factory=list)
    densify_events: list[DensifyEvent] = field(default_factory=list)
    final_view_psnr: list[float] = field(default_factory=list)
    final_view_ssim: list[float] = field(default_factory=list)

    @property
    def iterations_run(self) -> int:
        return len(self.loss_per_iteration)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    k = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(k**2) / (2.0 * sigma**2))
    return g / g.sum()


def _window_filter(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Valid-mode 2D correlation with the separable window outer(g, g)."""
    r = len(g) // 2
    t = ndimage.correlate1d(x, g, axis=0, mode="constant")
    t = ndimage.correlate1d(t, g, axis=1, mode="constant")
    return t[r:-r, r:-r]


def _window_adjoint(x_map: np.ndarray, g: np.ndarray, shape: tuple) -> np.ndarray:
    """Adjoint of _window_filter: scatter window-map values back to pixels.
    Exact for a symmetric g (the kernel equals its own flip)."""
    r = len(g) // 2
    full = np.zeros(shape)
    full[r:-r, r:-r] = x_map
    full = ndimage.correlate1d(full, g, axis=0, mode="constant")
    return ndimage.correlate1d(full, g, axis=1, mode="constant")


def _check_pair(a: ColorImage, b: ColorImage, cfg: LossConfig, need_window: bool) -> None:
    if a.values.shape != b.values.shape:
        raise InvalidArgumentError(
            f"image shapes differ: {a.values.shape} vs {b.values.shape}"
        )
    if need_window:
        h, w = a.values.shape[:2]
        if h < cfg.window_size or w < cfg.window_size:
            raise InvalidArgumentError(
                f"images must be at least {cfg.window_size}x{cfg.window_size} for SSIM"
            )


def _ssim_and_grad(a: np.ndarray, b: np.ndarray, cfg: LossConfig):
    """Mean SSIM over valid windows and channels, plus d(ssim)/da."""
    g = _gaussian_window(cfg.window_size, cfg.window_sigma)
    c1, c2 = cfg.c1, cfg.c2
    shape = a.shape[:2]
    total = 0.0
    grad = np.zeros_like(a)
    n_ch = a.shape[2]
    for ch in range(n_ch):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mu_x = _window_filter(x, g)
        mu_y = _window_filter(y, g)
        vx = _window_filter(x * x, g)
        vy = _window_filter(y * y, g)
        vxy = _window_filter(x * y, g)
        sig_x = vx - mu_x * mu_x
        sig_y = vy - mu_y * mu_y
        sig_xy = vxy - mu_x * mu_y
        a1 = 2.0 * mu_x * mu_y + c1
        a2 = 2.0 * sig_xy + c2
        b1 = mu_x * mu_x + mu_y * mu_y + c1
        b2 = sig_x + sig_y + c2
        s_map = (a1 * a2) / (b1 * b2)
        n_map = s_map.size
        total += float(s_map.mean())

        scale = 1.0 / (n_ch * n_map)
        d_mu = 2.0 * mu_y * (a2 - a1) / (b1 * b2) - 2.0 * mu_x * s_map * (1.0 / b1 - 1.0 / b2)
        d_vx = -s_map / b2
        d_vxy = 2.0 * a1 / (b1 * b2)
        grad[:, :, ch] = scale * (
            _window_adjoint(d_mu, g, shape)
            + _window_adjoint(d_vx, g, shape) * (2.0 * x)
            + _window_adjoint(d_vxy, g, shape) * y
        )
    return total / n_ch, grad


def ssim(a: ColorImage, b: ColorImage, cfg: LossConfig | None = None) -> float:
    """Mean structural similarity over valid 11x11 windows, channel-averaged."""
    cfg = cfg or LossConfig()
    _check_pair(a, b, cfg, need_window=True)
    value, _ = _ssim_and_grad(a.values, b.values, cfg)
    return value


def photometric_loss(render: ColorImage, target: ColorImage, cfg: LossConfig | None = None):
    """L = lambda * L1 + (1 - lambda) * (1 - SSIM) and its exact per-pixel
    RGB gradient with respect to the render."""
    cfg = cfg or LossConfig()
    _check_pair(render, target, cfg, need_window=cfg.lambda_weight < 1.0)
    r = render.values
    t = target.values
    diff = r - t
    l1 = float(np.abs(diff).mean())
    grad = cfg.lambda_weight * np.sign(diff) / diff.size
    if cfg.lambda_weight < 1.0:
        ssim_val, ssim_grad = _ssim_and_grad(r, t, cfg)
        loss = cfg.lambda_weight * l1 + (1.0 - cfg.lambda_weight) * (1.0 - ssim_val)
        grad = grad - (1.0 - cfg.lambda_weight) * ssim_grad
    else:
        loss = l1
    return loss, grad


def scene_radius(cloud: GaussianCloud) -> float:
    """Radius of the centroid-anchored bounding sphere of the centers."""
    if len(cloud) == 0:
        return 0.0
    d = cloud.centers - cloud.centers.mean(axis=0)
    return max(float(np.sqrt((d * d).sum(axis=1)).max()), 1e-6)


def _sample_in_3sigma(rng: np.random.Generator) -> np.ndarray:
    # rejection keeps children inside the densification locality bound
    while True:
        z = rng.standard_normal(3)
        if float(z @ z) <= 9.0:
            return z


def _quat_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _densify_with_mapping(
    cloud: GaussianCloud,
    grad_stats: DensifyStats,
    iteration: int,
    cfg: DensifyConfig,
    rng_seed: int,
    radius: float,
):
    """Returns (new cloud, carry index into the old cloud with -1 for fresh
    primitives, event). Clone keeps the parent and adds one offset copy;
    split replaces the parent with two children sampled from its density."""
    mean_grad = grad_stats.mean_screen_grad()
    max_scale = np.exp(cloud.log_scales).max(axis=1)
    trigger = mean_grad > cfg.grad_threshold
    small = max_scale <= cfg.split_scale_threshold * radius
    clone_idx = np.nonzero(trigger & small)[0]
    split_idx = np.nonzero(trigger & ~small)[0]

    rng = np.random.default_rng(rng_seed)
    tag = iteration + 1
    keep = np.ones(len(cloud), dtype=bool)
    keep[split_idx] = False

    new_rows = {k: [] for k in ("centers", "log_scales", "rotations", "opacity_logits", "colors")}
    parent_centers, parent_scales, child_centers = [], [], []

    def add_child(parent: int, center: np.ndarray, log_scale: np.ndarray):
        new_rows["centers"].append(center)
        new_rows["log_scales"].append(log_scale)
        new_rows["rotations"].append(cloud.rotations[parent].copy())
        new_rows["opacity_logits"].append(cloud.opacity_logits[parent])
        new_rows["colors"].append(cloud.colors[parent].copy())
        parent_centers.append(cloud.centers[parent].copy())
        parent_scales.append(max_scale[parent])
        child_centers.append(center)

    for i in clone_idx:
        direction = grad_stats.accum_center_grad[i]
        norm = np.linalg.norm(direction)
        # offset capped so clones honor the 3x-parent-scale locality bound
        step = min(0.01 * radius, 2.0 * max_scale[i])
        offset = direction / norm * step if norm > 0 else np.zeros(3)
        add_child(i, cloud.centers[i] + offset, cloud.log_scales[i].copy())

    for i in split_idx:
        rot = _quat_matrix(cloud.rotations[i])
        scales = np.exp(cloud.log_scales[i])
        child_scale = cloud.log_scales[i] - np.log(cfg.split_factor)
        for _ in range(2):
            z = _sample_in_3sigma(rng)
            add_child(i, cloud.centers[i] + rot @ (scales * z), child_scale.copy())

    kept_old = np.nonzero(keep)[0]
    n_new = len(new_rows["centers"])
    if n_new == 0:
        event = DensifyEvent(iteration, 0, 0, np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)))
        return cloud.select(keep), kept_old, event

    new_cloud = GaussianCloud(
        np.concatenate([cloud.centers[keep], np.array(new_rows["centers"])]),
        np.concatenate([cloud.log_scales[keep], np.array(new_rows["log_scales"])]),
        np.concatenate([cloud.rotations[keep], np.array(new_rows["rotations"])]),
        np.concatenate([cloud.opacity_logits[keep], np.array(new_rows["opacity_logits"])]),
        np.concatenate([cloud.colors[keep], np.array(new_rows["colors"])]),
        np.concatenate([cloud.split_iteration[keep], np.full(n_new, tag, dtype=np.int64)]),
    )
    carry = np.concatenate([kept_old, np.full(n_new, -1, dtype=np.int64)])
    event = DensifyEvent(
        iteration,
        len(clone_idx),
        len(split_idx),
        np.array(parent_centers),
        np.array(parent_scales),
        np.array(child_centers),
    )
    return new_cloud, carry, event


def densify_clone_split(
    cloud: GaussianCloud,
    grad_stats: DensifyStats,
    iteration: int,
    cfg: DensifyConfig,
    rng_seed: int,
    radius: float | None = None,
) -> GaussianCloud:
    """Clone small / split large primitives whose mean screen-space
    positional gradient exceeds the threshold. New primitives are tagged
    with iteration + 1."""
    if radius is None:
        radius = scene_radius(cloud)
    new_cloud, _, _ = _densify_with_mapping(cloud, grad_stats, iteration, cfg, rng_seed, radius)
    return new_cloud


def prune_low_opacity(cloud: GaussianCloud, floor: float) -> GaussianCloud:
    """Drop primitives with activated opacity strictly below the floor."""
    if not 0 < floor < 1:
        raise InvalidArgumentError("opacity floor must lie in (0, 1)")
    return cloud.select(cloud.opacities >= floor)


class _Adam:
    """Adam over the five parameter groups, with first/second moments that
    survive densification via an old-row carry index."""

    GROUPS = ("centers", "log_scales", "rotations", "opacity_logits", "colors")

    def __init__(self, cloud: GaussianCloud, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {g: np.zeros_like(getattr(cloud, g)) for g in self.GROUPS}
        self.v = {g: np.zeros_like(getattr(cloud, g)) for g in self.GROUPS}

    def lr(self, group: str, fraction: float) -> float:
        if group == "centers":
            return self.cfg.lr_center * self.cfg.center_lr_final_factor**fraction
        return {
            "log_scales": self.cfg.lr_log_scale,
            "rotations": self.cfg.lr_rotation,
            "opacity_logits": self.cfg.lr_opacity,
            "colors": self.cfg.lr_color,
        }[group]

    def step(self, cloud: GaussianCloud, grads: dict, fraction: float) -> None:
        self.t += 1
        cfg = self.cfg
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for group in self.GROUPS:
            g = grads[group]
            m = self.m[group]
            v = self.v[group]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            getattr(cloud, group)[...] -= self.lr(group, fraction) * update

    def remap(self, carry: np.ndarray, cloud: GaussianCloud) -> None:
        for group in self.GROUPS:
            fresh_m = np.zeros_like(getattr(cloud, group))
            fresh_v = np.zeros_like(getattr(cloud, group))
            old = carry >= 0
            fresh_m[old] = self.m[group][carry[old]]
            fresh_v[old] = self.v[group][carry[old]]
            self.m[group] = fresh_m
            self.v[group] = fresh_v


def train(
    cloud: GaussianCloud,
    views: list[tuple[ColorImage, PixelMask, CameraPose, CameraIntrinsics]],
    opt: OptimizerConfig,
    dens: DensifyConfig,
    loss_cfg: LossConfig,
    rng_seed: int,
    settings: RenderSettings | None = None,
) -> tuple[GaussianCloud, TrainReport]:
    """Optimize the cloud against the views, round-robin, one view per
    iteration. Supervision-false pixels contribute exactly zero gradient.
    Stops unconditionally at max_iterations."""
    if not views:
        raise InvalidArgumentError("train requires at least one view")
    if len(cloud) == 0:
        raise InvalidArgumentError("train requires a non-empty cloud")
    settings = settings or RenderSettings()
    report = TrainReport()
    if opt.max_iterations == 0:
        return cloud, report

    cloud = cloud.copy()
    radius = scene_radius(cloud)
    densify_until = dens.densify_until
    if densify_until is None:
        densify_until = int(0.8 * opt.max_iterations)
    adam = _Adam(cloud, opt)
    stats = DensifyStats.zeros(len(cloud))

    for it in range(1, opt.max_iterations + 1):
        target, mask, pose, intr = views[(it - 1) % len(views)]
        out = rasterize(cloud, pose, intr, settings)
        # masked-out target pixels are replaced by the render so they
        # neither contribute loss nor leak into SSIM windows as targets
        sup = mask.values[:, :, None]
        effective = ColorImage(np.where(sup, target.values, out.image.values))
        loss_val, pixel_grads = photometric_loss(out.image, effective, loss_cfg)
        pixel_grads = np.where(sup, pixel_grads, 0.0)
        bundle = rasterize_gradients(cloud, pose, intr, settings, pixel_grads)
        adam.step(
            cloud,
            {
                "centers": bundle.d_centers,
                "log_scales": bundle.d_log_scales,
                "rotations": bundle.d_rotations,
                "opacity_logits": bundle.d_opacity_logits,
                "colors": bundle.d_colors,
            },
            fraction=it / opt.max_iterations,
        )
        cloud.rotations /= np.linalg.norm(cloud.rotations, axis=1, keepdims=True)
        stats.add(bundle)

        if it % dens.interval == 0 and it < densify_until:
            cloud, carry, event = _densify_with_mapping(
                cloud, stats, it, dens, rng_seed + it, radius
            )
            adam.remap(carry, cloud)
            pruned = cloud.opacities >= dens.opacity_prune_floor
            cloud = cloud.select(pruned)
            adam.remap(np.nonzero(pruned)[0], cloud)
            stats = DensifyStats.zeros(len(cloud))
            report.densify_events.append(event)

        report.loss_per_iteration.append(loss_val)
        report.primitive_counts.append(len(cloud))

    for target, mask, pose, intr in views:
        out = rasterize(cloud, pose, intr, settings)
        report.final_view_psnr.append(psnr(out.image, target))
        report.final_view_ssim.append(ssim(out.image, target, loss_cfg))
    return cloud, report
