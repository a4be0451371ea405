"""HTTP client for a model gateway speaking the provider wire protocol.

Images travel as base64 RGB8 PNG, masks as base64 GRAY8 PNG (255 known,
0 unknown), depth as base64 little-endian float32 rasters. The client
retries transport failures, maps schema problems to protocol errors, and
rejects outpaint/inpaint responses that mutate known pixels.
"""

from __future__ import annotations

import base64
import binascii

import numpy as np
import requests

from textsplat.errors import (
    ContractViolationError,
    FormatError,
    InvalidArgumentError,
    ProtocolError,
    TransportError,
)
from textsplat.geometry import ColorImage, DepthMap, PixelMask
from textsplat.images import (
    color_to_u8,
    decode_color_png,
    encode_color_png,
    encode_mask_png,
)
from textsplat.providers import ProviderContract


def _b64_image(image: ColorImage) -> str:
    return base64.b64encode(encode_color_png(image)).decode("ascii")


def _b64_mask(mask: PixelMask) -> str:
    return base64.b64encode(encode_mask_png(mask)).decode("ascii")


def _decode_b64_image(payload, context: str) -> ColorImage:
    if not isinstance(payload, str):
        raise ProtocolError(f"{context}: image field missing or not a string")
    try:
        data = base64.b64decode(payload, validate=True)
        return decode_color_png(data)
    except (binascii.Error, ValueError, FormatError) as exc:
        raise ProtocolError(f"{context}: undecodable image payload: {exc}") from exc


class _RemoteProvider(ProviderContract):
    def __init__(self, base_url: str, timeout: float, retries: int):
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.session = requests.Session()

    def _post(self, endpoint: str, body: dict) -> dict:
        url = f"{self.base_url}{endpoint}"
        last_exc = None
        for _ in range(self.retries + 1):
            try:
                response = self.session.post(url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if response.status_code != 200:
                try:
                    detail = response.json().get("error", response.text)
                except ValueError:
                    detail = response.text
                raise ProtocolError(f"{endpoint} returned {response.status_code}: {detail}")
            try:
                payload = response.json()
            except ValueError as exc:
                raise ProtocolError(f"{endpoint}: response is not valid JSON") from exc
            if not isinstance(payload, dict):
                raise ProtocolError(f"{endpoint}: response JSON is not an object")
            return payload
        raise TransportError(
            f"{endpoint} unreachable after {self.retries + 1} attempts: {last_exc}"
        )

    def text2image(self, prompt: str, width: int, height: int, seed: int) -> ColorImage:
        payload = self._post(
            "/v1/text2image",
            {"prompt": prompt, "width": width, "height": height, "seed": seed},
        )
        image = _decode_b64_image(payload.get("image"), "/v1/text2image")
        if image.values.shape[:2] != (height, width):
            raise ProtocolError(
                f"/v1/text2image returned {image.values.shape[1]}x{image.values.shape[0]}, "
                f"requested {width}x{height}"
            )
        return image

    def _fill(self, endpoint: str, prompt, image, known_mask, seed) -> ColorImage:
        payload = self._post(
            endpoint,
            {
                "prompt": prompt,
                "image": _b64_image(image),
                "mask": _b64_mask(known_mask),
                "seed": seed,
            },
        )
        out = _decode_b64_image(payload.get("image"), endpoint)
        if out.values.shape != image.values.shape:
            raise ProtocolError(f"{endpoint} changed image dimensions")
        known = known_mask.values
        if not np.array_equal(color_to_u8(out)[known], color_to_u8(image)[known]):
            raise ContractViolationError(f"{endpoint} response mutated known pixels")
        return out

    def outpaint(self, prompt, image, known_mask, seed) -> ColorImage:
        return self._fill("/v1/outpaint", prompt, image, known_mask, seed)

    def inpaint(self, prompt, image, known_mask, seed) -> ColorImage:
        return self._fill("/v1/inpaint", prompt, image, known_mask, seed)

    def estimate_depth(self, image: ColorImage) -> DepthMap:
        payload = self._post("/v1/depth", {"image": _b64_image(image)})
        h, w = image.values.shape[:2]
        if payload.get("width") != w or payload.get("height") != h:
            raise ProtocolError("/v1/depth returned mismatched dimensions")
        raw = payload.get("depth")
        if not isinstance(raw, str):
            raise ProtocolError("/v1/depth: depth field missing or not a string")
        try:
            values = np.frombuffer(base64.b64decode(raw, validate=True), dtype="<f4")
        except (binascii.Error, ValueError) as exc:
            raise ProtocolError(f"/v1/depth: undecodable raster: {exc}") from exc
        if values.size != w * h:
            raise ProtocolError(f"/v1/depth raster holds {values.size} values, expected {w * h}")
        try:
            return DepthMap(values.reshape(h, w).astype(np.float64))
        except InvalidArgumentError as exc:
            raise ProtocolError(f"/v1/depth: invalid depth values: {exc}") from exc

    def superresolve(self, image: ColorImage, scale: int) -> ColorImage:
        payload = self._post("/v1/superres", {"image": _b64_image(image), "scale": scale})
        out = _decode_b64_image(payload.get("image"), "/v1/superres")
        h, w = image.values.shape[:2]
        if out.values.shape[:2] != (h * scale, w * scale):
            raise ProtocolError("/v1/superres returned wrong output dimensions")
        return out


def remote_provider(base_url: str, timeout: float = 30.0, retries: int = 2) -> _RemoteProvider:
    """Client for a gateway at base_url; transport failures are retried
    `retries` extra times before raising."""
    return _RemoteProvider(base_url, timeout, retries)
