"""Model backends: anything with a backend_id and a generate method.

    generate(prompt, depth, init_rgb, labels, strength, seed, steps)
        -> (H, W, 3) float rgb in [0, 1]

The procedural model is the one that ships working: a deterministic
depth-shaded color field run through the real blended sampling loop, so
every protocol behavior (masking, Update window, seeding) is exercised
end to end without weights or a GPU. A diffusion checkpoint is attached
by writing another class with the same two members and registering it
in make_model; the sampling module already does the blending work.
"""
from __future__ import annotations

import colorsys
import hashlib

import numpy as np

from .config import ServerConfig
from .sampling import blended_sample, collapse_labels, linear_schedule

DOWNLOAD_NOTE = (
    "no diffusion weights are bundled with this service. To serve a real "
    "model: install torch and diffusers, download a depth-conditioned "
    "checkpoint (for example stabilityai/stable-diffusion-2-depth via "
    "`huggingface-cli download`), implement a model class wrapping it "
    "(see models.py docstring), and pass its identifier as --model."
)


class ModelUnavailable(RuntimeError):
    """Requested model cannot be constructed on this host."""


def _prompt_rgb(prompt: str) -> np.ndarray:
    """Stable prompt-derived base color, reasonably saturated."""
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    hue = int.from_bytes(digest[:2], "big") / 65536.0
    sat = 0.45 + 0.4 * (digest[2] / 255.0)
    val = 0.6 + 0.3 * (digest[3] / 255.0)
    return np.array(colorsys.hsv_to_rgb(hue, sat, val), dtype=np.float64)


class ProceduralModel:
    """Deterministic stand-in: prompt color shaded by depth.

    Works at half the image resolution when the image is even-sized
    (quarter the cells), which keeps the latent-space code paths --
    block-mean encode, nearest-neighbor decode, priority label
    collapse -- honest instead of degenerate.
    """

    backend_id = "procedural-depth-shader"

    def __init__(self, config: ServerConfig):
        self.config = config

    @staticmethod
    def _factor(resolution: int) -> int:
        return 2 if resolution % 2 == 0 else 1

    @staticmethod
    def _encode(rgb: np.ndarray, factor: int) -> np.ndarray:
        if factor == 1:
            return rgb.copy()
        h, w, c = rgb.shape
        return rgb.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))

    @staticmethod
    def _decode(latent: np.ndarray, factor: int) -> np.ndarray:
        out = np.repeat(np.repeat(latent, factor, axis=0), factor, axis=1)
        return np.clip(out, 0.0, 1.0)

    def generate(self, prompt: str, depth: np.ndarray, init_rgb: np.ndarray,
                 labels: np.ndarray, strength: float, seed: int,
                 steps: int) -> np.ndarray:
        factor = self._factor(init_rgb.shape[0])
        init_latent = self._encode(init_rgb, factor)
        depth_latent = self._encode(depth[..., None], factor)[..., 0]
        labels_latent = collapse_labels(labels, factor)

        color = _prompt_rgb(prompt)
        shade = np.clip(color[None, None, :]
                        * (1.3 - 0.6 * depth_latent[..., None]), 0.0, 1.0)
        # background blocks keep exact depth 1.0 (mean of all-1 blocks)
        foreground = depth_latent < 1.0
        target = np.where(foreground[..., None], shade, init_latent)

        schedule = linear_schedule(steps)

        def predict(z: np.ndarray, t: int) -> np.ndarray:
            ab = schedule.alphabars[t - 1]
            return (z - np.sqrt(ab) * target) / np.sqrt(1.0 - ab)

        latent = blended_sample(init_latent, labels_latent, strength, seed,
                                schedule, predict)
        # clamped regions come back as the init latent exactly, so their
        # pixel drift is pure codec round-trip, inside the wire budget
        return self._decode(latent, factor)


def make_model(config: ServerConfig):
    if config.model == "procedural":
        return ProceduralModel(config)
    raise ModelUnavailable(f"model {config.model!r} is not available: "
                           + DOWNLOAD_NOTE)
