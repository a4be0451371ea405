"""Reconstruction quality metrics and artifact-directory evaluation.

PSNR is computed on the [0, 1] range with channel-pooled MSE and capped
at 100 dB (the exact-match convention). run_eval re-renders the stage-1
and stage-2 Gaussian scenes at every persisted camera and scores them
against the stored synthesized targets, and optionally against fresh
oracle renders of a synthetic ground-truth scene.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from textsplat.errors import InvalidArgumentError, ManifestError
from textsplat.geometry import CameraIntrinsics, CameraPose, ColorImage

PSNR_CAP = 100.0


def psnr(a: ColorImage, b: ColorImage) -> float:
    """Peak signal-to-noise ratio in dB; identical images return the cap."""
    if a.values.shape != b.values.shape:
        raise InvalidArgumentError(
            f"image shapes differ: {a.values.shape} vs {b.values.shape}"
        )
    mse = float(np.mean((a.values - b.values) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


@dataclass
class StageMetrics:
    per_view_psnr: list[float] = field(default_factory=list)
    per_view_ssim: list[float] = field(default_factory=list)
    oracle_psnr: list[float] = field(default_factory=list)
    oracle_ssim: list[float] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.per_view_psnr)) if self.per_view_psnr else 0.0

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.per_view_ssim)) if self.per_view_ssim else 0.0

    def to_dict(self) -> dict:
        out = {
            "per_view_psnr": self.per_view_psnr,
            "per_view_ssim": self.per_view_ssim,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
        }
        if self.oracle_psnr:
            out["oracle_psnr"] = self.oracle_psnr
            out["oracle_ssim"] = self.oracle_ssim
            out["mean_oracle_psnr"] = float(np.mean(self.oracle_psnr))
            out["mean_oracle_ssim"] = float(np.mean(self.oracle_ssim))
        return out


@dataclass
class MetricsReport:
    stages: dict[str, StageMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {name: metrics.to_dict() for name, metrics in self.stages.items()}


def _pose_from_record(record: dict) -> CameraPose:
    return CameraPose(
        rotation=np.array(record["rotation"], dtype=np.float64).reshape(3, 3),
        translation=np.array(record["translation"], dtype=np.float64),
    )


def _intrinsics_from_record(record: dict) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=record["fx"],
        fy=record["fy"],
        cx=record["cx"],
        cy=record["cy"],
        width=record["width"],
        height=record["height"],
    )


def run_eval(artifact_dir, spec=None) -> MetricsReport:
    """Score the persisted stage-1/stage-2 scenes on every stored view and
    write metrics.json into the artifact directory."""
    from textsplat import optim, ply, providers, splat
    from textsplat.images import load_color_png

    artifact_dir = Path(artifact_dir)
    manifest_path = artifact_dir / "manifest.json"
    if not manifest_path.exists():
        raise ManifestError(f"missing manifest.json in {artifact_dir}")
    manifest = json.loads(manifest_path.read_text())
    config_path = artifact_dir / "config.json"
    if not config_path.exists():
        raise ManifestError(f"missing config.json in {artifact_dir}")
    config = json.loads(config_path.read_text())
    settings = splat.RenderSettings(background=np.array(config["background"]))

    report = MetricsReport()
    loss_cfg = optim.LossConfig()
    for stage, ply_name in (("stage1", "gaussians_g1.ply"), ("stage2", "gaussians_g2.ply")):
        ply_path = artifact_dir / ply_name
        if not ply_path.exists():
            raise ManifestError(f"missing artifact {ply_path}")
        cloud = ply.import_ply(ply_path)
        metrics = StageMetrics()
        for record in manifest["views"]:
            image_path = artifact_dir / record["image"]
            if not image_path.exists():
                raise ManifestError(f"missing view image {image_path}")
            target = load_color_png(image_path)
            pose = _pose_from_record(record)
            intr = _intrinsics_from_record(record)
            render = splat.rasterize(cloud, pose, intr, settings).image
            metrics.per_view_psnr.append(psnr(render, target))
            metrics.per_view_ssim.append(optim.ssim(render, target, loss_cfg))
            if spec is not None:
                oracle_image, _ = providers.oracle_render(spec, pose, intr)
                metrics.oracle_psnr.append(psnr(render, oracle_image))
                metrics.oracle_ssim.append(optim.ssim(render, oracle_image, loss_cfg))
        report.stages[stage] = metrics

    (artifact_dir / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report
