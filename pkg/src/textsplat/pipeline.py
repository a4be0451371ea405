"""Two-stage scene synthesis.

Stage 1 grows a colored point cloud anchor by anchor: the first view is
generated from the prompt, unprojected through its estimated depth, and
each subsequent rotated anchor renders the cloud, outpaints the unknown
region, aligns the new depth estimate to the rendered depth over the
trustworthy overlap, and fuses the newly revealed pixels into the cloud.
The grown cloud is pruned of stretched points and trained into Gaussians
against the anchor views.

Stage 2 freezes the point cloud, inpaints occlusion holes seen from
jittered refinement cameras, adds narrow-FOV zoom views restored by the
provider, and continues training against every synthesized view.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from textsplat import ply
from textsplat.errors import (
    ConfigError,
    DegenerateAlignmentError,
    PersistenceError,
    PipelineError,
)
from textsplat.geometry import (
    CameraIntrinsics,
    CameraPose,
    ColorImage,
    DepthMap,
    PixelMask,
    PointCloud,
    align_depth,
    dilate_mask,
    fuse_points,
    intrinsics_from_fov,
    prune_stretched,
    render_points,
    unproject,
)
from textsplat.images import save_color_png, save_depth_raster, save_mask_png
from textsplat.optim import (
    DensifyConfig,
    LossConfig,
    OptimizerConfig,
    TrainReport,
    train,
)
from textsplat.providers import CaptureContext, ProviderContract
from textsplat.splat import (
    GaussianCloud,
    RenderSettings,
    coverage_mask,
    init_from_points,
    rasterize,
)


@dataclass(frozen=True)
class PipelineConfig:
    prompt: str = "a cozy study with wooden furniture"
    width: int = 704
    height: int = 512
    fov_deg: float = 55.0
    anchor_count: int = 14
    anchor_step_deg: float = 25.0
    refine_cameras_per_anchor: int = 4
    zoom_view_count: int = 8
    zoom_fov_factor: float = 0.5
    refine_translation_radius: float = 0.15
    refine_rotation_jitter_deg: float = 5.0
    dilation_stage1: int = 14
    dilation_stage2: int = 5
    stage1_iterations: int = 1000
    stage2_iterations: int = 2000
    coverage_alpha_threshold: float = 0.5
    point_radius_px: int = 1
    background: tuple = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ConfigError("width and height must be >= 32")
        if not 0 < self.fov_deg < 180 or not 0 < self.anchor_step_deg < 180:
            raise ConfigError("angles must lie in (0, 180)")
        if self.anchor_count < 0 or self.zoom_view_count < 0:
            raise ConfigError("view counts must be >= 0")
        if self.refine_cameras_per_anchor < 1:
            raise ConfigError("refine_cameras_per_anchor must be >= 1")
        if not 0 < self.zoom_fov_factor <= 1:
            raise ConfigError("zoom_fov_factor must lie in (0, 1]")
        if self.dilation_stage1 < 0 or self.dilation_stage2 < 0:
            raise ConfigError("dilation radii must be >= 0")
        if self.stage1_iterations < 0 or self.stage2_iterations < 0:
            raise ConfigError("iteration counts must be >= 0")
        if not 0 < self.coverage_alpha_threshold < 1:
            raise ConfigError("coverage_alpha_threshold must lie in (0, 1)")
        if self.point_radius_px < 0:
            raise ConfigError("point_radius_px must be >= 0")
        bg = tuple(float(c) for c in self.background)
        if len(bg) != 3 or any(c < 0 or c > 1 for c in bg):
            raise ConfigError("background must be three channels in [0, 1]")
        object.__setattr__(self, "background", bg)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def intrinsics(self) -> CameraIntrinsics:
        return intrinsics_from_fov(self.fov_deg, self.width, self.height)

    def render_settings(self) -> RenderSettings:
        return RenderSettings(background=np.array(self.background))


@dataclass
class ViewRecord:
    """One synthesized view: training target, supervision mask, camera."""

    index: int
    kind: str  # "initial" | "anchor" | "refine" | "zoom"
    image: ColorImage
    mask: PixelMask
    pose: CameraPose
    intrinsics: CameraIntrinsics
    depth: DepthMap | None = None


@dataclass
class SceneArtifacts:
    """Everything a run produces. Cumulative per-anchor point clouds are
    recoverable as prefixes of the full cloud via the source_view tags."""

    config: PipelineConfig
    views: list[ViewRecord] = field(default_factory=list)
    point_cloud_full: PointCloud | None = None
    point_cloud_pruned: PointCloud | None = None
    g0: GaussianCloud | None = None
    g1: GaussianCloud | None = None
    g2: GaussianCloud | None = None
    report_stage1: TrainReport | None = None
    report_stage2: TrainReport | None = None

    def point_cloud_at(self, anchor_index: int) -> PointCloud:
        """Cloud state after fusing anchor `anchor_index` (growth order)."""
        cloud = self.point_cloud_full
        keep = cloud.source_view <= anchor_index
        return PointCloud(cloud.positions[keep], cloud.colors[keep], cloud.source_view[keep])


def _yaw_pose(yaw_deg: float) -> CameraPose:
    theta = math.radians(yaw_deg)
    c, s = math.cos(theta), math.sin(theta)
    rotation = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    return CameraPose(rotation=rotation, translation=np.zeros(3))


def anchor_poses(cfg: PipelineConfig) -> list[CameraPose]:
    """Identity plus anchor_count pure-yaw rotations, interleaved outward
    (+step, -step, +2*step, ...) so each anchor borders visited coverage."""
    poses = [CameraPose.identity()]
    magnitude = cfg.anchor_step_deg
    sign = 1.0
    while len(poses) < cfg.anchor_count + 1:
        poses.append(_yaw_pose(sign * magnitude))
        if sign < 0:
            magnitude += cfg.anchor_step_deg
        sign = -sign
    return poses


def sample_refine_poses(
    anchors: list[CameraPose], cfg: PipelineConfig, seed: int
) -> list[CameraPose]:
    """refine_cameras_per_anchor jittered cameras around every given
    anchor: translation uniform in a ball, rotation composed with a
    uniform-angle random-axis jitter."""
    rng = np.random.default_rng(seed)
    out = []
    for anchor in anchors:
        for _ in range(cfg.refine_cameras_per_anchor):
            direction = rng.normal(size=3)
            norm = np.linalg.norm(direction)
            direction = direction / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
            radius = cfg.refine_translation_radius * rng.uniform() ** (1.0 / 3.0)
            center = anchor.camera_center + radius * direction

            angle = math.radians(cfg.refine_rotation_jitter_deg) * rng.uniform()
            axis = rng.normal(size=3)
            axis_norm = np.linalg.norm(axis)
            axis = axis / axis_norm if axis_norm > 0 else np.array([0.0, 1.0, 0.0])
            if angle > 0:
                jitter = Rotation.from_rotvec(angle * axis).as_matrix()
                rotation = jitter @ anchor.rotation
            else:
                rotation = anchor.rotation.copy()
            out.append(CameraPose(rotation=rotation, translation=-rotation @ center))
    return out


def sample_zoom_poses(
    anchors: list[CameraPose], cfg: PipelineConfig, seed: int
) -> list[tuple[CameraPose, CameraIntrinsics]]:
    """zoom_view_count anchor poses re-used with a narrowed field of view."""
    rng = np.random.default_rng(seed)
    zoom_intr = intrinsics_from_fov(cfg.fov_deg * cfg.zoom_fov_factor, cfg.width, cfg.height)
    picks = rng.integers(0, len(anchors), cfg.zoom_view_count)
    return [(anchors[i], zoom_intr) for i in picks]


def _call_ctx(provider: ProviderContract, pose: CameraPose, intr: CameraIntrinsics) -> None:
    provider.set_capture_context(CaptureContext(pose=pose, intrinsics=intr))


def stage1_initialize(
    cfg: PipelineConfig, provider: ProviderContract
) -> tuple[PointCloud, GaussianCloud, SceneArtifacts]:
    """Progressive point-cloud growth over the anchor ring, then the first
    Gaussian training run against the anchor views."""
    intr = cfg.intrinsics()
    poses = anchor_poses(cfg)
    artifacts = SceneArtifacts(config=cfg)
    full_mask = PixelMask.full(cfg.height, cfg.width)

    _call_ctx(provider, poses[0], intr)
    image0 = provider.text2image(cfg.prompt, cfg.width, cfg.height, cfg.seed)
    depth0 = provider.estimate_depth(image0)
    cloud = unproject(depth0, image0, full_mask, poses[0], intr, view_index=0)
    artifacts.views.append(
        ViewRecord(0, "initial", image0, full_mask, poses[0], intr, depth=depth0)
    )

    for i in range(1, cfg.anchor_count + 1):
        pose = poses[i]
        rendered, known, rendered_depth = render_points(
            cloud, pose, intr, cfg.point_radius_px
        )
        known_core = dilate_mask(known, cfg.dilation_stage1)
        _call_ctx(provider, pose, intr)
        image = provider.outpaint(cfg.prompt, rendered, known_core, cfg.seed + i)
        estimated = provider.estimate_depth(image)
        try:
            _, aligned = align_depth(estimated, rendered_depth, known_core)
        except DegenerateAlignmentError as exc:
            raise PipelineError(f"degenerate depth alignment at anchor {i}: {exc}") from exc
        new_region = PixelMask(~known_core.values)
        cloud = fuse_points(cloud, aligned, image, new_region, pose, intr, view_index=i)
        artifacts.views.append(
            ViewRecord(i, "anchor", image, full_mask, pose, intr, depth=aligned)
        )

    pruned = prune_stretched(cloud)
    artifacts.point_cloud_full = cloud
    artifacts.point_cloud_pruned = pruned
    g0 = init_from_points(pruned)
    artifacts.g0 = g0.copy()

    opt = OptimizerConfig(max_iterations=cfg.stage1_iterations)
    views = [(v.image, v.mask, v.pose, v.intrinsics) for v in artifacts.views]
    g1, report = train(
        g0, views, opt, DensifyConfig(), LossConfig(), cfg.seed, cfg.render_settings()
    )
    artifacts.g1 = g1
    artifacts.report_stage1 = report
    return pruned, g1, artifacts


def stage2_refine(
    g1: GaussianCloud,
    artifacts: SceneArtifacts,
    cfg: PipelineConfig,
    provider: ProviderContract,
) -> tuple[GaussianCloud, SceneArtifacts]:
    """Inpaint occlusion holes on refinement views, add restored zoom
    views, and train against every synthesized view. The point cloud is
    left untouched."""
    intr = cfg.intrinsics()
    settings = cfg.render_settings()
    anchors = anchor_poses(cfg)
    refine_poses = sample_refine_poses(anchors[1:], cfg, cfg.seed + 101)
    zoom_views = sample_zoom_poses(anchors, cfg, cfg.seed + 202)
    full_mask = PixelMask.full(cfg.height, cfg.width)

    index = len(artifacts.views)
    for pose in refine_poses:
        out = rasterize(g1, pose, intr, settings)
        covered = coverage_mask(out, cfg.coverage_alpha_threshold)
        known_core = dilate_mask(covered, cfg.dilation_stage2)
        _call_ctx(provider, pose, intr)
        image = provider.inpaint(cfg.prompt, out.image, known_core, cfg.seed + index)
        artifacts.views.append(ViewRecord(index, "refine", image, full_mask, pose, intr))
        index += 1

    for pose, zoom_intr in zoom_views:
        out = rasterize(g1, pose, zoom_intr, settings)
        _call_ctx(provider, pose, zoom_intr)
        image = provider.superresolve(out.image, scale=1)
        artifacts.views.append(ViewRecord(index, "zoom", image, full_mask, pose, zoom_intr))
        index += 1

    opt = OptimizerConfig(max_iterations=cfg.stage2_iterations)
    views = [(v.image, v.mask, v.pose, v.intrinsics) for v in artifacts.views]
    g2, report = train(
        g1, views, opt, DensifyConfig(), LossConfig(), cfg.seed + 1, settings
    )
    artifacts.g2 = g2
    artifacts.report_stage2 = report
    return g2, artifacts


def _pose_record(pose: CameraPose) -> dict:
    return {
        "rotation": [[float(x) for x in row] for row in pose.rotation],
        "translation": [float(x) for x in pose.translation],
    }


def _intr_record(intr: CameraIntrinsics) -> dict:
    return {
        "fx": intr.fx,
        "fy": intr.fy,
        "cx": intr.cx,
        "cy": intr.cy,
        "width": intr.width,
        "height": intr.height,
    }


def _report_record(report: TrainReport) -> dict:
    return {
        "iterations_run": report.iterations_run,
        "loss_per_iteration": report.loss_per_iteration,
        "primitive_counts": report.primitive_counts,
        "densify_events": [
            {"iteration": e.iteration, "clones": e.n_cloned, "splits": e.n_split}
            for e in report.densify_events
        ],
        "final_view_psnr": report.final_view_psnr,
        "final_view_ssim": report.final_view_ssim,
    }


def generate(cfg: PipelineConfig, provider: ProviderContract, output_dir) -> SceneArtifacts:
    """Run both stages and persist every artifact under output_dir."""
    pruned, g1, artifacts = stage1_initialize(cfg, provider)
    _, artifacts = stage2_refine(g1, artifacts, cfg, provider)

    output_dir = Path(output_dir)
    written: list[str] = []

    def record(path: Path) -> Path:
        written.append(str(path.relative_to(output_dir)))
        return path

    try:
        (output_dir / "views").mkdir(parents=True, exist_ok=True)
        (output_dir / "masks").mkdir(exist_ok=True)
        (output_dir / "depth").mkdir(exist_ok=True)

        record(output_dir / "config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
        )
        view_records = []
        for view in artifacts.views:
            name = f"{view.index:03d}"
            save_color_png(view.image, record(output_dir / "views" / f"{name}.png"))
            save_mask_png(view.mask, record(output_dir / "masks" / f"{name}.png"))
            entry = {
                "index": view.index,
                "kind": view.kind,
                "image": f"views/{name}.png",
                "mask": f"masks/{name}.png",
                **_pose_record(view.pose),
                **_intr_record(view.intrinsics),
            }
            if view.depth is not None:
                save_depth_raster(view.depth, record(output_dir / "depth" / f"{name}.f32"))
                written.append(f"depth/{name}.f32.json")
                entry["depth"] = f"depth/{name}.f32"
            view_records.append(entry)

        ply.export_point_ply(artifacts.point_cloud_pruned, record(output_dir / "cloud_pN.ply"))
        ply.export_ply(artifacts.g1, record(output_dir / "gaussians_g1.ply"))
        ply.export_ply(artifacts.g2, record(output_dir / "gaussians_g2.ply"))
        record(output_dir / "report_stage1.json").write_text(
            json.dumps(_report_record(artifacts.report_stage1), indent=2)
        )
        record(output_dir / "report_stage2.json").write_text(
            json.dumps(_report_record(artifacts.report_stage2), indent=2)
        )
        manifest = {
            "views": view_records,
            "view_count": len(view_records),
            "primitives_g1": len(artifacts.g1),
            "primitives_g2": len(artifacts.g2),
            "points_pruned": len(artifacts.point_cloud_pruned),
            "files": sorted(written + ["manifest.json"]),
        }
        (output_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True)
        )
    except OSError as exc:
        raise PersistenceError(
            f"failed writing artifacts to {output_dir}: {exc}", partial_manifest=written
        ) from exc
    return artifacts
