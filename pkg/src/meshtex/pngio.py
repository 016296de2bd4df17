"""PNG and base64 codecs for the wire protocol and debug dumps.

Images travel as: 8-bit RGB (color), 16-bit grayscale (depth,
similarity), and palette-indexed (generation masks). Encoding then
decoding any of them is lossless at their stated bit depth.

Float arrays live in [0, 1]; quantization is round-to-nearest.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from .errors import ProtocolError

# Debug palette for mask labels; order matches MaskLabel values.
MASK_PALETTE = (
    (255, 255, 255),  # New: white
    (255, 140, 0),    # Update: orange
    (0, 64, 255),     # Keep: blue
    (0, 0, 0),        # Ignore: black
)


def quantize_u8(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def quantize_u16(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 65535.0).astype(np.uint16)


def encode_rgb8(rgb: np.ndarray) -> bytes:
    """(H, W, 3) float in [0,1] -> 8-bit RGB PNG bytes."""
    img = Image.fromarray(quantize_u8(rgb), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_rgb8(data: bytes) -> np.ndarray:
    """PNG bytes -> (H, W, 3) float64 in [0,1]."""
    return decode_rgb8_raw(data).astype(np.float64) / 255.0


def decode_rgb8_raw(data: bytes) -> np.ndarray:
    """PNG bytes -> (H, W, 3) uint8, no rescaling."""
    img = Image.open(io.BytesIO(data))
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def encode_gray16(values: np.ndarray) -> bytes:
    """(H, W) float in [0,1] -> 16-bit grayscale PNG bytes."""
    arr = quantize_u16(values)
    img = Image.new("I;16", (arr.shape[1], arr.shape[0]))
    img.frombytes(arr.tobytes())
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_gray16(data: bytes) -> np.ndarray:
    """16-bit grayscale PNG bytes -> (H, W) float64 in [0,1]."""
    img = Image.open(io.BytesIO(data))
    arr = np.asarray(img)
    if arr.dtype == np.int32:  # PIL reads I;16 PNGs as mode I on some paths
        arr = arr.astype(np.uint16)
    if arr.dtype != np.uint16:
        raise ProtocolError(f"expected 16-bit grayscale PNG, got dtype {arr.dtype}")
    return arr.astype(np.float64) / 65535.0


def encode_mask_png(labels: np.ndarray) -> bytes:
    """(H, W) uint8 label grid -> palette-indexed PNG bytes."""
    labels = np.asarray(labels)
    if labels.max(initial=0) >= len(MASK_PALETTE):
        raise ValueError("label value outside the mask palette")
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    flat = [c for rgb in MASK_PALETTE for c in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes) -> np.ndarray:
    """Palette-indexed PNG bytes -> (H, W) uint8 label grid."""
    img = Image.open(io.BytesIO(data))
    if img.mode != "P":
        raise ProtocolError(f"mask must be a palette-indexed PNG, got mode {img.mode}")
    labels = np.asarray(img, dtype=np.uint8)
    if labels.max(initial=0) >= len(MASK_PALETTE):
        raise ProtocolError("mask PNG uses indices outside the label palette")
    return labels


def to_b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def from_b64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise ProtocolError("payload is not valid base64") from exc


def save_png(path, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)
