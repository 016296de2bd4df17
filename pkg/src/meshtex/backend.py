"""Synthesis backends and the one-shot view-level wire protocol.

A backend answers one request per view: conditioned on a prompt, a
depth map, the current render, and a generation mask, it returns a
full replacement image. The in-process path (`local_generate`) runs the
toy denoiser; `remote_generate` speaks the same contract over HTTP, so
a served backend and the local one are interchangeable.

Wire format (JSON over POST {base}/v1/generate):
    request:  version, prompt, depth (16-bit gray PNG b64),
              init_image (8-bit RGB PNG b64), mask (indexed PNG b64),
              strength_update, seed, steps
    response: version, image (8-bit RGB PNG b64), backend_id, elapsed_ms

Contract: Keep and Ignore pixels of the response must stay within
DELTA_B of init_image. Violations by a remote are logged, not fatal.
GET {base}/v1/health reports liveness.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import requests as _requests

from . import pngio
from .diffusion import (
    Conditioning,
    IdentityCodec,
    SamplerConfig,
    ToyPredictor,
    make_linear_schedule,
    masked_sample,
)
from .errors import BackendError, ProtocolError, Timeout
from .raster import ViewImage
from .texstate import GenerationMask, downsample_mask

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
GENERATE_PATH = "/v1/generate"
HEALTH_PATH = "/v1/health"
LOCAL_BACKEND_ID = "meshtex-local-toy"

# Keep/Ignore pixels may drift at most this much (8-bit steps) per channel.
DELTA_B_STEPS = 16

_REQUEST_FIELDS = ("prompt", "depth", "init_image", "mask",
                   "strength_update", "seed", "steps")
_RESPONSE_FIELDS = ("image", "backend_id", "elapsed_ms")


@dataclass(frozen=True)
class GenerateRequest:
    prompt: str
    depth: str          # 16-bit grayscale PNG, base64
    init_image: str     # 8-bit RGB PNG, base64
    mask: str           # palette-indexed PNG, base64
    strength_update: float
    seed: int
    steps: int

    def to_json(self) -> dict:
        return {
            "version": PROTOCOL_VERSION,
            "prompt": self.prompt,
            "depth": self.depth,
            "init_image": self.init_image,
            "mask": self.mask,
            "strength_update": self.strength_update,
            "seed": self.seed,
            "steps": self.steps,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "GenerateRequest":
        _check_version(payload)
        missing = [f for f in _REQUEST_FIELDS if f not in payload]
        if missing:
            raise ProtocolError(f"request missing fields: {', '.join(missing)}")
        return cls(
            prompt=str(payload["prompt"]),
            depth=str(payload["depth"]),
            init_image=str(payload["init_image"]),
            mask=str(payload["mask"]),
            strength_update=float(payload["strength_update"]),
            seed=int(payload["seed"]),
            steps=int(payload["steps"]),
        )


@dataclass(frozen=True)
class GenerateResponse:
    image: str          # 8-bit RGB PNG, base64
    backend_id: str
    elapsed_ms: float

    def to_json(self) -> dict:
        return {
            "version": PROTOCOL_VERSION,
            "image": self.image,
            "backend_id": self.backend_id,
            "elapsed_ms": self.elapsed_ms,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "GenerateResponse":
        _check_version(payload)
        missing = [f for f in _RESPONSE_FIELDS if f not in payload]
        if missing:
            raise ProtocolError(f"response missing fields: {', '.join(missing)}")
        return cls(
            image=str(payload["image"]),
            backend_id=str(payload["backend_id"]),
            elapsed_ms=float(payload["elapsed_ms"]),
        )


def _check_version(payload: dict):
    if "version" not in payload:
        raise ProtocolError("payload has no protocol version field")
    if payload["version"] != PROTOCOL_VERSION:
        raise ProtocolError(
            f"unknown protocol version {payload['version']!r}, "
            f"this client speaks {PROTOCOL_VERSION}"
        )


def build_request(
    prompt: str,
    depth: np.ndarray,
    init_image: ViewImage,
    mask: GenerationMask,
    strength_update: float,
    seed: int,
    steps: int,
) -> GenerateRequest:
    """Encode in-memory view buffers into a wire request."""
    res = init_image.resolution
    if depth.shape != (res, res) or mask.resolution != res:
        raise ProtocolError(
            f"depth {depth.shape}, mask {mask.resolution}, image {res}: "
            f"all three must share one resolution"
        )
    return GenerateRequest(
        prompt=prompt,
        depth=pngio.to_b64(pngio.encode_gray16(depth)),
        init_image=pngio.to_b64(pngio.encode_rgb8(init_image.rgb)),
        mask=pngio.to_b64(pngio.encode_mask_png(mask.labels)),
        strength_update=float(strength_update),
        seed=int(seed),
        steps=int(steps),
    )


def decode_request_images(request: GenerateRequest):
    """Wire request -> (depth (H,W) float, init ViewImage, GenerationMask)."""
    depth = pngio.decode_gray16(pngio.from_b64(request.depth))
    init = ViewImage(pngio.decode_rgb8(pngio.from_b64(request.init_image)))
    mask = GenerationMask(pngio.decode_mask_png(pngio.from_b64(request.mask)))
    res = init.resolution
    if depth.shape != (res, res) or mask.resolution != res:
        raise ProtocolError(
            f"request images disagree on resolution: depth {depth.shape}, "
            f"init {res}, mask {mask.resolution}"
        )
    return depth, init, mask


def local_generate(request: GenerateRequest) -> GenerateResponse:
    """Run the toy denoiser in process; the reference for the wire contract.

    Deterministic: same request, same bits out.
    """
    t0 = time.perf_counter()
    if not 0.0 < request.strength_update <= 1.0:
        raise ProtocolError(
            f"strength_update must be in (0, 1], got {request.strength_update}"
        )
    if request.steps < 1:
        raise ProtocolError(f"steps must be >= 1, got {request.steps}")

    depth, init, mask = decode_request_images(request)

    schedule = make_linear_schedule(request.steps)
    codec = IdentityCodec()
    # identity codec: the latent grid is the image grid, mask factor 1
    latent_mask = downsample_mask(mask, 1)
    cond = Conditioning(prompt=request.prompt, depth=depth, init_view=init)
    config = SamplerConfig(request.strength_update, request.seed, schedule)
    predictor = ToyPredictor(schedule, codec)

    z0 = masked_sample(codec.encode(init), latent_mask, config, predictor, cond)
    out = codec.decode(z0)

    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    return GenerateResponse(
        image=pngio.to_b64(pngio.encode_rgb8(out.rgb)),
        backend_id=LOCAL_BACKEND_ID,
        elapsed_ms=elapsed_ms,
    )


def check_keep_contract(request: GenerateRequest, response: GenerateResponse) -> int:
    """Count Keep/Ignore pixels drifting beyond DELTA_B; logs if any."""
    from .texstate import MaskLabel

    init_u8 = pngio.decode_rgb8_raw(pngio.from_b64(request.init_image))
    out_u8 = pngio.decode_rgb8_raw(pngio.from_b64(response.image))
    if init_u8.shape != out_u8.shape:
        raise ProtocolError(
            f"response resolution {out_u8.shape[:2]} does not match "
            f"request {init_u8.shape[:2]}"
        )
    labels = pngio.decode_mask_png(pngio.from_b64(request.mask))
    frozen = (labels == int(MaskLabel.KEEP)) | (labels == int(MaskLabel.IGNORE))
    drift = np.abs(out_u8.astype(np.int16) - init_u8.astype(np.int16)).max(axis=2)
    violations = int((frozen & (drift > DELTA_B_STEPS)).sum())
    if violations:
        log.warning(
            "backend %s moved %d Keep/Ignore pixels beyond %d/255; "
            "returning the response anyway",
            response.backend_id, violations, DELTA_B_STEPS,
        )
    return violations


def remote_generate(endpoint: str, request: GenerateRequest,
                    timeout: float = 300.0) -> GenerateResponse:
    """POST a request to a served backend and validate the reply.

    Raises:
        Timeout: no answer within `timeout` seconds.
        BackendError: transport failure or non-200 status.
        ProtocolError: unparseable or wrong-version reply.
    """
    url = endpoint.rstrip("/") + GENERATE_PATH
    try:
        http = _requests.post(url, json=request.to_json(), timeout=timeout)
    except _requests.Timeout as exc:
        raise Timeout(f"backend at {url} did not answer in {timeout}s") from exc
    except _requests.RequestException as exc:
        raise BackendError(f"backend at {url} unreachable: {exc}") from exc

    if http.status_code != 200:
        raise BackendError(
            f"backend at {url} returned {http.status_code}: {http.text[:300]}"
        )
    try:
        payload = http.json()
    except ValueError as exc:
        raise ProtocolError(f"backend at {url} returned non-JSON body") from exc

    response = GenerateResponse.from_json(payload)
    check_keep_contract(request, response)
    return response


def ping(endpoint: str, timeout: float = 10.0) -> dict:
    """GET /v1/health; returns the parsed body."""
    url = endpoint.rstrip("/") + HEALTH_PATH
    try:
        http = _requests.get(url, timeout=timeout)
    except _requests.Timeout as exc:
        raise Timeout(f"health check at {url} timed out") from exc
    except _requests.RequestException as exc:
        raise BackendError(f"health check at {url} failed: {exc}") from exc
    if http.status_code != 200:
        raise BackendError(f"health check at {url} returned {http.status_code}")
    return http.json()


class LocalBackend:
    """In-process toy backend."""

    backend_id = LOCAL_BACKEND_ID

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        return local_generate(request)


class RemoteBackend:
    """HTTP client for a served backend."""

    def __init__(self, endpoint: str, timeout: float = 300.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        return remote_generate(self.endpoint, request, self.timeout)


def make_backend(selector: str):
    """'local' -> LocalBackend, anything http(s):// -> RemoteBackend."""
    if selector == "local":
        return LocalBackend()
    if selector.startswith("http://") or selector.startswith("https://"):
        return RemoteBackend(selector)
    raise ValueError(f"backend must be 'local' or an http(s) URL, got {selector!r}")
