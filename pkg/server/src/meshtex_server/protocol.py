"""Wire types and image codecs for /v1/generate.

The request/response schema mirrors docs/protocol.md at the repository
root. Images travel as base64 PNG: 8-bit RGB for color, 16-bit
grayscale for depth (1.0 = background), palette-indexed for the region
mask. Only the mask's indices are meaningful; its palette is cosmetic.
"""
from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, field_validator

PROTOCOL_VERSION = 1

LABEL_NEW = 0
LABEL_UPDATE = 1
LABEL_KEEP = 2
LABEL_IGNORE = 3
N_LABELS = 4


class WireError(ValueError):
    """Payload is schema-valid JSON but the content is unusable."""


class GenerateRequest(BaseModel):
    version: int
    prompt: str
    depth: str
    init_image: str
    mask: str
    strength_update: float = Field(gt=0.0, le=1.0)
    seed: int
    steps: int = Field(ge=1)

    @field_validator("version")
    @classmethod
    def _known_version(cls, v: int) -> int:
        if v != PROTOCOL_VERSION:
            raise ValueError(f"unknown protocol version {v!r}, "
                             f"this server speaks {PROTOCOL_VERSION}")
        return v


class GenerateResponse(BaseModel):
    version: int = PROTOCOL_VERSION
    image: str
    backend_id: str
    elapsed_ms: float


def _b64_bytes(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise WireError(f"invalid base64 payload: {exc}") from exc


def _open_png(data: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except OSError as exc:
        raise WireError(f"payload is not a decodable image: {exc}") from exc
    return img


def decode_rgb8(text: str) -> np.ndarray:
    """base64 PNG -> (H, W, 3) float64 in [0, 1]."""
    img = _open_png(_b64_bytes(text))
    if img.mode != "RGB":
        raise WireError(f"expected 8-bit RGB PNG, got mode {img.mode}")
    return np.asarray(img, dtype=np.float64) / 255.0


def decode_gray16(text: str) -> np.ndarray:
    """base64 16-bit grayscale PNG -> (H, W) float64 in [0, 1]."""
    arr = np.asarray(_open_png(_b64_bytes(text)))
    if arr.dtype == np.int32:  # PIL may widen mode I;16 to I
        arr = arr.astype(np.uint16)
    if arr.dtype != np.uint16:
        raise WireError(f"expected 16-bit grayscale PNG, got dtype {arr.dtype}")
    return arr.astype(np.float64) / 65535.0


def decode_mask(text: str) -> np.ndarray:
    """base64 palette PNG -> (H, W) uint8 of region labels."""
    img = _open_png(_b64_bytes(text))
    if img.mode != "P":
        raise WireError(f"mask must be a palette-indexed PNG, got mode {img.mode}")
    labels = np.asarray(img, dtype=np.uint8)
    if labels.max(initial=0) >= N_LABELS:
        raise WireError("mask uses indices outside the 4-label palette")
    return labels


def encode_rgb8(rgb: np.ndarray) -> str:
    """(H, W, 3) float in [0, 1] -> base64 PNG."""
    u8 = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_request_images(request: GenerateRequest):
    """Unpack and cross-check the three images of a request.

    Returns (depth, init_rgb, labels). Raises WireError when any image
    fails to decode or the resolutions disagree.
    """
    depth = decode_gray16(request.depth)
    init = decode_rgb8(request.init_image)
    labels = decode_mask(request.mask)
    res = init.shape[0]
    if init.shape[:2] != (res, res):
        raise WireError(f"init image must be square, got {init.shape[:2]}")
    if depth.shape != (res, res) or labels.shape != (res, res):
        raise WireError(
            f"images disagree on resolution: depth {depth.shape}, "
            f"init {init.shape[:2]}, mask {labels.shape}"
        )
    return depth, init, labels
