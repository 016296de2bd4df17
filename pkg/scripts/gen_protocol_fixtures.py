#!/usr/bin/env python3
"""Regenerate the golden wire-protocol fixtures under fixtures/protocol/.

Two frozen request/response pairs capture the `/v1/generate` contract:

  all_keep.json  every pixel labeled Keep; any conforming backend must
                 return the init image within the 16/255 drift budget
  all_new.json   every pixel labeled New; output content is free, only
                 schema, resolution, and seeded determinism are pinned

The responses are produced by the in-process toy backend, which is
deterministic, so the files only change when the protocol itself does.
Run from the repository root: python3 scripts/gen_protocol_fixtures.py
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from meshtex.backend import build_request, local_generate
from meshtex.raster import ViewImage
from meshtex.texstate import GenerationMask, MaskLabel

RESOLUTION = 64
OUT_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "protocol"


def _smooth_init(res: int) -> np.ndarray:
    """Gentle two-color gradient; lossy-codec backends stay in budget."""
    ramp = np.linspace(0.25, 0.75, res)
    rgb = np.empty((res, res, 3))
    rgb[:, :, 0] = ramp[None, :]
    rgb[:, :, 1] = 0.5
    rgb[:, :, 2] = ramp[:, None]
    return rgb


def _bowl_depth(res: int) -> np.ndarray:
    """Radial foreground bowl with a true background rim at exactly 1.0."""
    yy, xx = np.mgrid[0:res, 0:res]
    r = np.hypot(xx - (res - 1) / 2.0, yy - (res - 1) / 2.0) / (res / 2.0)
    depth = np.clip(0.15 + 0.8 * r, 0.15, 0.95)
    depth[r > 0.92] = 1.0
    return depth


def _fixture(prompt: str, label: MaskLabel, seed: int) -> dict:
    labels = np.full((RESOLUTION, RESOLUTION), int(label), dtype=np.uint8)
    request = build_request(prompt, _bowl_depth(RESOLUTION),
                            ViewImage(_smooth_init(RESOLUTION)),
                            GenerationMask(labels),
                            strength_update=0.5, seed=seed, steps=50)
    response = local_generate(request)
    return {"request": request.to_json(), "response": response.to_json()}


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    cases = {
        "all_keep.json": _fixture("verdigris bronze", MaskLabel.KEEP, 1001),
        "all_new.json": _fixture("verdigris bronze", MaskLabel.NEW, 1002),
    }
    for name, payload in cases.items():
        path = OUT_DIR / name
        path.write_text(json.dumps(payload, indent=1) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
