"""PSNR and artifact-directory evaluation tests.

PSNR cases use constant-difference images whose MSE is exact arithmetic.
run_eval is exercised against a real (tiny) generate run, and one view
score is recomputed from the persisted files with independent calls.
"""

from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import room_scene

from textsplat.errors import InvalidArgumentError, ManifestError
from textsplat.geometry import ColorImage
from textsplat.images import load_color_png
from textsplat.metrics import PSNR_CAP, StageMetrics, psnr, run_eval
from textsplat.pipeline import PipelineConfig, generate
from textsplat.providers import oracle_provider
from textsplat.providers.synthetic import DepthPerturbation

from textsplat import optim, ply, splat


def const_pair(delta):
    a = ColorImage(np.full((4, 6, 3), 0.4))
    b = ColorImage(np.full((4, 6, 3), 0.4 + delta))
    return a, b


class TestPsnr:
    def test_constant_offset_hand_values(self):
        a, b = const_pair(0.1)  # MSE 0.01 -> 20 dB
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)
        a, b = const_pair(0.01)  # MSE 1e-4 -> 40 dB
        assert psnr(a, b) == pytest.approx(40.0, abs=1e-9)

    def test_identical_images_hit_cap(self):
        a, b = const_pair(0.0)
        assert psnr(a, b) == PSNR_CAP

    def test_tiny_difference_capped(self):
        a, b = const_pair(1e-9)
        assert psnr(a, b) == PSNR_CAP

    def test_symmetry(self):
        a, b = const_pair(0.07)
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch_rejected(self):
        a = ColorImage(np.zeros((4, 4, 3)))
        b = ColorImage(np.zeros((4, 5, 3)))
        with pytest.raises(InvalidArgumentError, match="shapes differ"):
            psnr(a, b)


class TestStageMetrics:
    def test_means(self):
        m = StageMetrics(per_view_psnr=[20.0, 30.0], per_view_ssim=[0.8, 0.9])
        assert m.mean_psnr == pytest.approx(25.0)
        assert m.mean_ssim == pytest.approx(0.85)

    def test_empty_means_are_zero(self):
        m = StageMetrics()
        assert m.mean_psnr == 0.0 and m.mean_ssim == 0.0

    def test_dict_shape(self):
        m = StageMetrics(per_view_psnr=[20.0], per_view_ssim=[0.8])
        d = m.to_dict()
        assert set(d) == {"per_view_psnr", "per_view_ssim", "mean_psnr", "mean_ssim"}
        m.oracle_psnr, m.oracle_ssim = [25.0], [0.85]
        assert "mean_oracle_psnr" in m.to_dict()


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("eval_scene")
    cfg = PipelineConfig(width=48, height=32, anchor_count=1, refine_cameras_per_anchor=1,
                         zoom_view_count=1, stage1_iterations=4, stage2_iterations=4,
                         dilation_stage1=4, dilation_stage2=2, seed=0)
    provider = oracle_provider(room_scene(), DepthPerturbation())
    generate(cfg, provider, out)
    return out


class TestRunEval:
    def test_scores_all_views_and_writes_report(self, artifacts):
        report = run_eval(artifacts)
        assert set(report.stages) == {"stage1", "stage2"}
        manifest = json.loads((artifacts / "manifest.json").read_text())
        for metrics in report.stages.values():
            assert len(metrics.per_view_psnr) == manifest["view_count"]
            assert len(metrics.per_view_ssim) == manifest["view_count"]
            assert not metrics.oracle_psnr
        written = json.loads((artifacts / "metrics.json").read_text())
        assert written["stage1"]["per_view_psnr"] == report.stages["stage1"].per_view_psnr

    def test_one_view_recomputed_independently(self, artifacts):
        report = run_eval(artifacts)
        manifest = json.loads((artifacts / "manifest.json").read_text())
        record = manifest["views"][0]
        cloud = ply.import_ply(artifacts / "gaussians_g1.ply")
        config = json.loads((artifacts / "config.json").read_text())
        settings = splat.RenderSettings(background=np.array(config["background"]))
        from textsplat.geometry import CameraIntrinsics, CameraPose

        pose = CameraPose(np.array(record["rotation"]).reshape(3, 3),
                          np.array(record["translation"]))
        intr = CameraIntrinsics(record["fx"], record["fy"], record["cx"], record["cy"],
                                record["width"], record["height"])
        render = splat.rasterize(cloud, pose, intr, settings).image
        target = load_color_png(artifacts / record["image"])
        assert report.stages["stage1"].per_view_psnr[0] == pytest.approx(
            psnr(render, target), abs=1e-12
        )
        assert report.stages["stage1"].per_view_ssim[0] == pytest.approx(
            optim.ssim(render, target), abs=1e-12
        )

    def test_oracle_scoring(self, artifacts):
        report = run_eval(artifacts, spec=room_scene())
        stage2 = report.stages["stage2"]
        assert len(stage2.oracle_psnr) == len(stage2.per_view_psnr)
        d = stage2.to_dict()
        assert "mean_oracle_psnr" in d and "mean_oracle_ssim" in d

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(ManifestError, match="manifest.json"):
            run_eval(tmp_path)

    def test_missing_stage_cloud_rejected(self, artifacts, tmp_path):
        import shutil

        broken = tmp_path / "broken"
        shutil.copytree(artifacts, broken)
        (broken / "gaussians_g2.ply").unlink()
        with pytest.raises(ManifestError, match="gaussians_g2.ply"):
            run_eval(broken)
