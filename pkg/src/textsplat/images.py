"""PNG and raw-raster conversions between files/bytes and scene types.

Color images travel as 8-bit RGB PNG (value = round(channel * 255)),
masks as 8-bit grayscale PNG holding only 0 (unknown) and 255 (known),
depth as headerless little-endian float32 rasters with a JSON sidecar
carrying the dimensions.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from textsplat.errors import FormatError
from textsplat.geometry import ColorImage, DepthMap, PixelMask


def color_to_u8(image: ColorImage) -> np.ndarray:
    return np.clip(np.rint(image.values * 255.0), 0, 255).astype(np.uint8)


def u8_to_color(raster: np.ndarray) -> ColorImage:
    return ColorImage(raster.astype(np.float64) / 255.0)


def encode_color_png(image: ColorImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(color_to_u8(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_color_png(data: bytes) -> ColorImage:
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise FormatError(f"invalid PNG payload: {exc}") from exc
    return u8_to_color(rgb)


def encode_mask_png(mask: PixelMask) -> bytes:
    raster = np.where(mask.values, 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(raster, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes) -> PixelMask:
    try:
        with Image.open(io.BytesIO(data)) as img:
            raster = np.asarray(img.convert("L"))
    except Exception as exc:
        raise FormatError(f"invalid PNG payload: {exc}") from exc
    if not np.isin(raster, (0, 255)).all():
        raise FormatError("mask PNG must contain only values 0 and 255")
    return PixelMask(raster == 255)


def save_color_png(image: ColorImage, path) -> None:
    Path(path).write_bytes(encode_color_png(image))


def load_color_png(path) -> ColorImage:
    return decode_color_png(Path(path).read_bytes())


def save_mask_png(mask: PixelMask, path) -> None:
    Path(path).write_bytes(encode_mask_png(mask))


def load_mask_png(path) -> PixelMask:
    return decode_mask_png(Path(path).read_bytes())


def save_depth_raster(depth: DepthMap, path) -> None:
    """Raw little-endian float32 rows plus a .json dims sidecar."""
    path = Path(path)
    h, w = depth.values.shape
    path.write_bytes(depth.values.astype("<f4").tobytes())
    sidecar = {"width": w, "height": h, "dtype": "<f4", "units": "meters"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))


def load_depth_raster(path) -> DepthMap:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise FormatError(f"missing depth sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    w, h = int(sidecar["width"]), int(sidecar["height"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != w * h:
        raise FormatError(f"depth raster holds {raw.size} values, expected {w * h}")
    return DepthMap(raw.reshape(h, w).astype(np.float64))
