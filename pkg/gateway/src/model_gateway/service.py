"""Wire-protocol HTTP service over stub or model-backed capabilities.

Five POST endpoints plus GET /v1/health. Bodies are JSON; schema
violations answer 400 with {"error": ...}, capability failures 500.
The known-pixel identity of fill responses is checked server-side
before anything is sent, in both modes.
"""

from __future__ import annotations

import base64
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

import numpy as np

from model_gateway import codec, stub
from model_gateway.codec import SchemaError

VALID_MODES = ("stub", "models")


class GatewayError(RuntimeError):
    """Service cannot be constructed or run as configured."""


@dataclass(frozen=True)
class GatewayConfig:
    """Service settings. The model identifiers and diffusion knobs steer
    models mode only; stub mode ignores them. Port 0 binds ephemerally."""

    port: int = 8080
    host: str = "127.0.0.1"
    mode: str = "stub"
    text2image_model: str = "controlnet"
    paint_model: str = "controlnet"
    depth_model: str = "zoedepth"
    superres_model: str = "diffbir"
    guidance_scale: float = 9.0
    control_strength: float = 1.0
    generation_steps: int = 20
    seed_policy: str = "request"  # seeds always arrive in request bodies

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise GatewayError("port must lie in [0, 65535]")
        if self.mode not in VALID_MODES:
            raise GatewayError(f"mode must be one of {VALID_MODES}")
        if self.generation_steps < 1:
            raise GatewayError("generation_steps must be >= 1")
        if self.guidance_scale <= 0.0 or self.control_strength <= 0.0:
            raise GatewayError("guidance_scale and control_strength must be > 0")
        if self.seed_policy != "request":
            raise GatewayError("only the 'request' seed policy is implemented")


@dataclass
class ModelBackends:
    """One callable per capability. Images are (h, w, 3) uint8, masks
    boolean (h, w) with True = known; depth returns float meters (h, w)."""

    text2image: Callable[[str, int, int, int], np.ndarray]
    fill: Callable[[str, np.ndarray, np.ndarray, int], np.ndarray]
    depth: Callable[[np.ndarray], np.ndarray]
    superres: Callable[[np.ndarray, int], np.ndarray]


def _stub_backends() -> ModelBackends:
    return ModelBackends(
        text2image=stub.text2image,
        fill=lambda prompt, image, known, seed: stub.fill_unknown(image, known),
        depth=lambda image: np.full(image.shape[:2], stub.DEPTH_METERS),
        superres=stub.upscale_nearest,
    )


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "model-gateway/0.1"

    def log_message(self, fmt, *args):
        pass

    def _respond(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._respond(200, {"mode": self.server.gateway_config.mode})
        else:
            self._respond(404, {"error": f"no such endpoint: GET {self.path}"})

    def do_POST(self):
        # drain the body before answering so keep-alive stays in sync
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = 0
        raw = self.rfile.read(length) if length > 0 else b""
        route = _ROUTES.get(self.path)
        if route is None:
            self._respond(404, {"error": f"no such endpoint: POST {self.path}"})
            return
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._respond(400, {"error": "request body is not valid JSON"})
            return
        if not isinstance(payload, dict):
            self._respond(400, {"error": "request body must be a JSON object"})
            return
        try:
            self._respond(200, route(self, payload))
        except SchemaError as exc:
            self._respond(400, {"error": str(exc)})
        except Exception as exc:
            self._respond(500, {"error": f"{type(exc).__name__}: {exc}"})

    def _text2image(self, payload: dict) -> dict:
        prompt = codec.require_str(payload, "prompt")
        width = codec.require_int(payload, "width", minimum=1)
        height = codec.require_int(payload, "height", minimum=1)
        seed = codec.require_int(payload, "seed")
        if width > codec.MAX_SIDE or height > codec.MAX_SIDE:
            raise SchemaError(f"requested size exceeds the {codec.MAX_SIDE} px side limit")
        pixels = self.server.backends.text2image(prompt, width, height, seed)
        if pixels.shape != (height, width, 3):
            raise RuntimeError("text2image backend returned wrong dimensions")
        return {"image": codec.encode_image(pixels)}

    def _fill(self, payload: dict) -> dict:
        prompt = codec.require_str(payload, "prompt")
        seed = codec.require_int(payload, "seed")
        image = codec.decode_image_field(payload)
        known = codec.decode_mask_field(payload, image.shape[:2])
        if known.all():
            return {"image": payload["image"]}  # nothing to fill; echo the bytes
        out = self.server.backends.fill(prompt, image, known, seed)
        if out.shape != image.shape:
            raise RuntimeError("fill backend changed image dimensions")
        if not np.array_equal(out[known], image[known]):
            raise RuntimeError("fill backend mutated known pixels")
        return {"image": codec.encode_image(out)}

    def _depth(self, payload: dict) -> dict:
        image = codec.decode_image_field(payload)
        h, w = image.shape[:2]
        depth = np.asarray(self.server.backends.depth(image), dtype=np.float64)
        if depth.shape != (h, w):
            raise RuntimeError("depth backend returned wrong dimensions")
        if not np.isfinite(depth).all() or (depth <= 0.0).any():
            raise RuntimeError("depth backend returned non-positive or non-finite values")
        raster = depth.astype("<f4").tobytes()
        return {
            "depth": base64.b64encode(raster).decode("ascii"),
            "width": w,
            "height": h,
        }

    def _superres(self, payload: dict) -> dict:
        image = codec.decode_image_field(payload)
        scale = codec.require_int(payload, "scale", minimum=1)
        h, w = image.shape[:2]
        if h * scale > codec.MAX_SIDE or w * scale > codec.MAX_SIDE:
            raise SchemaError(f"scaled size exceeds the {codec.MAX_SIDE} px side limit")
        out = self.server.backends.superres(image, scale)
        if out.shape != (h * scale, w * scale, 3):
            raise RuntimeError("superres backend returned wrong dimensions")
        return {"image": codec.encode_image(out)}


_ROUTES = {
    "/v1/text2image": _Handler._text2image,
    "/v1/outpaint": _Handler._fill,
    "/v1/inpaint": _Handler._fill,
    "/v1/depth": _Handler._depth,
    "/v1/superres": _Handler._superres,
}


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True


class GatewayService:
    """Running service bound to config.host; shut down with shutdown()
    or by leaving the context."""

    def __init__(self, config: GatewayConfig, backends: Optional[ModelBackends] = None):
        if config.mode == "models":
            if backends is None:
                raise GatewayError(
                    "models mode requires registered ModelBackends; none are bundled"
                )
        else:
            backends = _stub_backends()
        self.config = config
        self.server = _Server((config.host, config.port), _Handler)
        self.server.gateway_config = config
        self.server.backends = backends
        self.port = self.server.server_address[1]
        self.base_url = f"http://{config.host}:{self.port}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5.0)

    def __enter__(self) -> "GatewayService":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(config: GatewayConfig, backends: Optional[ModelBackends] = None) -> GatewayService:
    """Start the service and return its running handle."""
    return GatewayService(config, backends)
