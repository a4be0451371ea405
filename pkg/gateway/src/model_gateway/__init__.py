"""HTTP gateway exposing image-generation, fill, depth, and upscaling
capabilities behind one wire protocol.

Stub mode answers every endpoint with cheap deterministic stand-ins so
client pipelines can run end to end without model weights; models mode
routes the same schema-validated requests to registered backends.
"""

from model_gateway.service import (
    GatewayConfig,
    GatewayError,
    GatewayService,
    ModelBackends,
    serve,
)

__all__ = [
    "GatewayConfig",
    "GatewayError",
    "GatewayService",
    "ModelBackends",
    "serve",
]
