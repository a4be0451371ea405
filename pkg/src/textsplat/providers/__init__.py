"""Generative-model boundary.

One contract covers the five capabilities the pipeline consumes:
text-to-image, outpainting, inpainting, depth estimation and
super-resolution. Outpaint/inpaint implementations must return known
pixels byte-identical to the input; only unknown pixels may change.

Implementations here: a deterministic synthetic-scene oracle (exact
ray-cast imagery standing in for diffusion output, making the pipeline a
verifiable reconstruction problem) and an HTTP client for a model
gateway speaking the wire protocol.

The pipeline threads the camera of each request through an opaque
capture context (``set_capture_context``); the oracle needs it to render
the right view, network-backed providers ignore it.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

from textsplat.geometry import (
    CameraIntrinsics,
    CameraPose,
    ColorImage,
    DepthMap,
    PixelMask,
)


@dataclass(frozen=True)
class CaptureContext:
    """Camera that produced (or will consume) the image in the next call."""

    pose: CameraPose
    intrinsics: CameraIntrinsics


class ProviderContract(abc.ABC):
    """Five generative capabilities behind one interface."""

    def __init__(self):
        self._context: CaptureContext | None = None

    def set_capture_context(self, context: CaptureContext) -> None:
        self._context = context

    @abc.abstractmethod
    def text2image(self, prompt: str, width: int, height: int, seed: int) -> ColorImage: ...

    @abc.abstractmethod
    def outpaint(
        self, prompt: str, image: ColorImage, known_mask: PixelMask, seed: int
    ) -> ColorImage: ...

    @abc.abstractmethod
    def inpaint(
        self, prompt: str, image: ColorImage, known_mask: PixelMask, seed: int
    ) -> ColorImage: ...

    @abc.abstractmethod
    def estimate_depth(self, image: ColorImage) -> DepthMap: ...

    @abc.abstractmethod
    def superresolve(self, image: ColorImage, scale: int) -> ColorImage: ...


from textsplat.providers.synthetic import (  # noqa: E402
    DepthPerturbation,
    SyntheticSceneSpec,
    oracle_provider,
    oracle_render,
)
from textsplat.providers.remote import remote_provider  # noqa: E402

__all__ = [
    "CaptureContext",
    "ProviderContract",
    "SyntheticSceneSpec",
    "DepthPerturbation",
    "oracle_render",
    "oracle_provider",
    "remote_provider",
]
