"""FastAPI application: /v1/generate and /v1/health."""
from __future__ import annotations

import logging
import threading
import time

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import __version__
from .config import ServerConfig
from .models import ModelUnavailable, make_model
from .protocol import (
    PROTOCOL_VERSION,
    GenerateRequest,
    GenerateResponse,
    WireError,
    decode_request_images,
    encode_rgb8,
)

log = logging.getLogger(__name__)


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    model = make_model(config)
    # the model is a single shared resource; requests queue behind it
    model_lock = threading.Lock()

    app = FastAPI(title="meshtex-server", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def _malformed(request, exc):
        # schema violations are client errors, not unprocessable entities;
        # strip the offending input (image payloads are huge) and the
        # non-serializable context from pydantic's error list
        detail = [{"loc": list(e["loc"]), "msg": e["msg"], "type": e["type"]}
                  for e in exc.errors()]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.get("/v1/health")
    def health() -> dict:
        return {
            "status": "ok",
            "ready": True,
            "backend_id": model.backend_id,
            "model": config.model,
            "device": config.device,
            "steps_default": config.steps_default,
            "protocol_version": PROTOCOL_VERSION,
            "server_version": __version__,
        }

    @app.post("/v1/generate")
    def generate(request: GenerateRequest) -> dict:
        try:
            depth, init_rgb, labels = decode_request_images(request)
        except WireError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        started = time.perf_counter()
        with model_lock:
            try:
                rgb = model.generate(request.prompt, depth, init_rgb, labels,
                                     request.strength_update, request.seed,
                                     request.steps)
            except Exception as exc:
                log.exception("model failed on prompt %r", request.prompt)
                raise HTTPException(status_code=500,
                                    detail=f"{type(exc).__name__}: {exc}")
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        return GenerateResponse(
            image=encode_rgb8(rgb),
            backend_id=model.backend_id,
            elapsed_ms=elapsed_ms,
        ).model_dump()

    return app


def build_default_app() -> FastAPI:
    """Factory for `uvicorn meshtex_server.app:build_default_app`."""
    return create_app()
