"""PNG / raw-raster conversion tests.

Quantization expectations are computed independently with numpy rounding
so the codec is checked against arithmetic, not against itself.
"""

from __future__ import annotations

import io

import numpy as np
import pytest
from PIL import Image

from textsplat.errors import FormatError
from textsplat.geometry import ColorImage, DepthMap, PixelMask
from textsplat.images import (
    color_to_u8,
    decode_color_png,
    decode_mask_png,
    encode_color_png,
    encode_mask_png,
    load_color_png,
    load_depth_raster,
    load_mask_png,
    save_color_png,
    save_depth_raster,
    save_mask_png,
)


class TestColorPng:
    def test_u8_grid_round_trips_exactly(self, tmp_path):
        rng = np.random.default_rng(0)
        raster = rng.integers(0, 256, (9, 13, 3), dtype=np.uint8)
        image = ColorImage(raster / 255.0)
        path = tmp_path / "img.png"
        save_color_png(image, path)
        again = load_color_png(path)
        assert np.array_equal(again.values, raster / 255.0)

    def test_quantization_matches_round_half_even(self):
        values = np.array([[[0.0, 0.5, 1.0], [0.2, 0.499, 0.7001]]])
        expected = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
        assert np.array_equal(color_to_u8(ColorImage(values)), expected)
        decoded = decode_color_png(encode_color_png(ColorImage(values)))
        assert np.array_equal(decoded.values, expected / 255.0)

    def test_invalid_payload_rejected(self):
        with pytest.raises(FormatError, match="invalid PNG"):
            decode_color_png(b"\x89PNG but not really")


class TestMaskPng:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = PixelMask(rng.uniform(size=(7, 11)) < 0.4)
        path = tmp_path / "mask.png"
        save_mask_png(mask, path)
        assert np.array_equal(load_mask_png(path).values, mask.values)

    def test_values_are_0_and_255(self):
        mask = PixelMask(np.array([[True, False]]))
        with Image.open(io.BytesIO(encode_mask_png(mask))) as img:
            assert img.mode == "L"
            raster = np.asarray(img)
        assert raster.tolist() == [[255, 0]]

    def test_intermediate_gray_rejected(self):
        buf = io.BytesIO()
        Image.fromarray(np.array([[255, 7]], dtype=np.uint8), mode="L").save(
            buf, format="PNG"
        )
        with pytest.raises(FormatError, match="only values 0 and 255"):
            decode_mask_png(buf.getvalue())

    def test_invalid_payload_rejected(self):
        with pytest.raises(FormatError, match="invalid PNG"):
            decode_mask_png(b"nope")


class TestDepthRaster:
    def test_float32_values_round_trip_exactly(self, tmp_path):
        rng = np.random.default_rng(2)
        values = rng.uniform(0.5, 40.0, (6, 8)).astype(np.float32).astype(np.float64)
        path = tmp_path / "d.f32"
        save_depth_raster(DepthMap(values), path)
        again = load_depth_raster(path)
        assert np.array_equal(again.values, values)

    def test_file_is_raw_little_endian_rows(self, tmp_path):
        values = np.arange(1, 7, dtype=np.float64).reshape(2, 3)
        path = tmp_path / "d.f32"
        save_depth_raster(DepthMap(values), path)
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
        assert raw.tolist() == [1, 2, 3, 4, 5, 6]

    def test_sidecar_records_dimensions(self, tmp_path):
        import json

        path = tmp_path / "d.f32"
        save_depth_raster(DepthMap(np.ones((4, 5))), path)
        sidecar = json.loads((tmp_path / "d.f32.json").read_text())
        assert sidecar["width"] == 5
        assert sidecar["height"] == 4

    def test_missing_sidecar_rejected(self, tmp_path):
        path = tmp_path / "d.f32"
        save_depth_raster(DepthMap(np.ones((2, 2))), path)
        (tmp_path / "d.f32.json").unlink()
        with pytest.raises(FormatError, match="sidecar"):
            load_depth_raster(path)

    def test_truncated_raster_rejected(self, tmp_path):
        path = tmp_path / "d.f32"
        save_depth_raster(DepthMap(np.ones((3, 3))), path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError, match="expected 9"):
            load_depth_raster(path)
