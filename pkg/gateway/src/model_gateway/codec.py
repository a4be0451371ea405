"""Request payload codecs: base64 PNG fields in, validated numpy out.

Every helper raises SchemaError on malformed input; the service maps
that to HTTP 400 with an {"error": ...} body.
"""

from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from PIL import Image

MAX_SIDE = 8192  # service self-protection; far above any client's use


class SchemaError(ValueError):
    """Request body violates the endpoint schema."""


def require_str(payload: dict, field: str) -> str:
    value = payload.get(field)
    if not isinstance(value, str):
        raise SchemaError(f"'{field}' must be a string")
    return value


def require_int(payload: dict, field: str, minimum: int | None = None) -> int:
    value = payload.get(field)
    # bool is an int subclass but never a legal wire value
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(f"'{field}' must be an integer")
    if minimum is not None and value < minimum:
        raise SchemaError(f"'{field}' must be >= {minimum}")
    return value


def _decode_png(payload: dict, field: str) -> Image.Image:
    raw = require_str(payload, field)
    try:
        data = base64.b64decode(raw, validate=True)
    except binascii.Error as exc:
        raise SchemaError(f"'{field}' is not valid base64: {exc}") from exc
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise SchemaError(f"'{field}' does not decode as an image: {exc}") from exc
    if img.format != "PNG":
        raise SchemaError(f"'{field}' must be a PNG payload, got {img.format}")
    if img.width > MAX_SIDE or img.height > MAX_SIDE:
        raise SchemaError(f"'{field}' exceeds the {MAX_SIDE} px side limit")
    return img


def decode_image_field(payload: dict, field: str = "image") -> np.ndarray:
    """Return the (h, w, 3) uint8 pixels of a base64 RGB8 PNG field."""
    img = _decode_png(payload, field)
    if img.mode != "RGB":
        raise SchemaError(f"'{field}' must be an 8-bit RGB PNG, got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def decode_mask_field(payload: dict, shape: tuple[int, int], field: str = "mask") -> np.ndarray:
    """Return a boolean (h, w) mask from a GRAY8 PNG holding only 0/255."""
    img = _decode_png(payload, field)
    if img.mode != "L":
        raise SchemaError(f"'{field}' must be an 8-bit grayscale PNG, got mode {img.mode}")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.shape != shape:
        raise SchemaError(
            f"'{field}' is {arr.shape[1]}x{arr.shape[0]}, image is {shape[1]}x{shape[0]}"
        )
    if not np.isin(arr, (0, 255)).all():
        raise SchemaError(f"'{field}' pixels must be exactly 0 or 255")
    return arr == 255


def encode_image(pixels: np.ndarray) -> str:
    """Base64 RGB8 PNG of (h, w, 3) uint8 pixels."""
    buf = io.BytesIO()
    Image.fromarray(pixels, "RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
