"""The scene-synthesis package's HTTP provider exercised against a live
stub service: every capability round-trips, the fill identity contract
holds end to end, and a reduced pipeline runs over real sockets."""

import numpy as np
import pytest

from model_gateway import GatewayConfig, serve

from textsplat.errors import ProtocolError
from textsplat.geometry import ColorImage, PixelMask
from textsplat.images import color_to_u8
from textsplat.pipeline import PipelineConfig, generate
from textsplat.providers.remote import remote_provider


@pytest.fixture(scope="module")
def stub_service():
    service = serve(GatewayConfig(port=0))
    yield service
    service.shutdown()


@pytest.fixture(scope="module")
def provider(stub_service):
    return remote_provider(stub_service.base_url, timeout=10.0, retries=0)


def u8_image(seed, h, w):
    rng = np.random.default_rng(seed)
    raster = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    return ColorImage(raster.astype(np.float64) / 255.0), raster


class TestCapabilities:
    def test_text2image_dimensions_and_determinism(self, provider):
        a = provider.text2image("a brick alcove", 24, 18, seed=4)
        b = provider.text2image("a brick alcove", 24, 18, seed=4)
        assert a.values.shape == (18, 24, 3)
        assert np.array_equal(a.values, b.values)

    def test_outpaint_keeps_known_and_averages_unknown(self, provider):
        image, raster = u8_image(11, 16, 16)
        known = np.ones((16, 16), dtype=bool)
        known[5, 3] = known[12, 9] = False
        out = provider.outpaint("alcove", image, PixelMask(known), seed=2)
        out_u8 = color_to_u8(out)
        assert np.array_equal(out_u8[known], raster[known])
        expected = np.rint(raster[known].mean(axis=0)).astype(np.uint8)
        assert np.array_equal(out_u8[~known], np.broadcast_to(expected, (2, 3)))

    def test_outpaint_all_known_is_identity(self, provider):
        image, raster = u8_image(12, 9, 7)
        out = provider.outpaint("alcove", image, PixelMask(np.ones((9, 7), bool)), seed=2)
        assert np.array_equal(color_to_u8(out), raster)

    def test_inpaint_same_contract(self, provider):
        image, raster = u8_image(13, 8, 8)
        known = np.ones((8, 8), dtype=bool)
        known[2:5, 2:5] = False
        out = provider.inpaint("alcove", image, PixelMask(known), seed=7)
        assert np.array_equal(color_to_u8(out)[known], raster[known])

    def test_depth_is_a_constant_plane(self, provider):
        image, _ = u8_image(14, 12, 10)
        depth = provider.estimate_depth(image)
        assert depth.values.shape == (12, 10)
        assert np.all(depth.values == 5.0)

    def test_superres_is_nearest_neighbor(self, provider):
        image, raster = u8_image(15, 6, 5)
        out = provider.superresolve(image, 2)
        expected = np.repeat(np.repeat(raster, 2, axis=0), 2, axis=1)
        assert np.array_equal(color_to_u8(out), expected)

    def test_server_rejection_maps_to_protocol_error(self, provider):
        image, _ = u8_image(16, 4, 4)
        with pytest.raises(ProtocolError, match="400"):
            provider.superresolve(image, 0)


class TestPipelineOverHttp:
    def test_reduced_generate_run(self, provider, tmp_path):
        cfg = PipelineConfig(
            prompt="a stub courtyard",
            width=40,
            height=32,
            anchor_count=0,
            refine_cameras_per_anchor=1,
            zoom_view_count=0,
            stage1_iterations=2,
            stage2_iterations=2,
            seed=1,
        )
        artifacts = generate(cfg, provider, tmp_path)
        assert len(artifacts.g2) > 0
        assert (tmp_path / "manifest.json").exists()
        assert (tmp_path / "gaussians_g2.ply").exists()
