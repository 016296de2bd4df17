"""Server configuration: model choice, device, sampling defaults, listen address."""
from __future__ import annotations

import argparse
from dataclasses import dataclass


@dataclass(frozen=True)
class ServerConfig:
    model: str = "procedural"
    device: str = "cpu"
    steps_default: int = 50
    guidance_scale: float = 7.5
    host: str = "127.0.0.1"
    port: int = 8421

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ValueError(f"port must be in (0, 65536), got {self.port}")
        if self.steps_default < 1:
            raise ValueError("steps_default must be >= 1")
        if self.guidance_scale <= 0:
            raise ValueError("guidance_scale must be positive")


def parse_args(argv=None) -> ServerConfig:
    parser = argparse.ArgumentParser(
        prog="meshtex-server",
        description="Serve /v1/generate for the mesh texturing client.",
    )
    defaults = ServerConfig()
    parser.add_argument("--model", default=defaults.model,
                        help="'procedural' or a local diffusion model path")
    parser.add_argument("--device", default=defaults.device)
    parser.add_argument("--steps-default", type=int, default=defaults.steps_default,
                        help="step count advertised by /v1/health; requests "
                             "still choose their own")
    parser.add_argument("--guidance-scale", type=float,
                        default=defaults.guidance_scale)
    parser.add_argument("--host", default=defaults.host)
    parser.add_argument("--port", type=int, default=defaults.port)
    args = parser.parse_args(argv)
    return ServerConfig(model=args.model, device=args.device,
                        steps_default=args.steps_default,
                        guidance_scale=args.guidance_scale,
                        host=args.host, port=args.port)
