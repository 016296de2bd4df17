"""Mask-blended reverse diffusion at the model's latent resolution.

The sampling loop is model-agnostic: a model supplies a noise
prediction `predict(z, t)` and this module runs the schedule, the
per-step region blending, and the Update time window. The label
semantics (and the rule for collapsing labels when the latent grid is
coarser than the image) are part of the wire contract, so they are
duplicated here rather than imported from the client package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .protocol import LABEL_NEW, LABEL_UPDATE

_U64 = (1 << 64) - 1

# grid_noise branches: one independent stream per use of randomness
BRANCH_INIT = 0
BRANCH_STEP = 1
BRANCH_CLAMP = 2


@dataclass(frozen=True)
class Schedule:
    T: int
    betas: np.ndarray
    alphabars: np.ndarray  # alphabars[t-1] = prod(1 - betas[:t])


def linear_schedule(T: int, beta_start: float = 2e-3,
                    beta_end: float = 0.18) -> Schedule:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return Schedule(T, betas, np.cumprod(1.0 - betas))


def grid_noise(seed: int, t: int, branch: int, shape: tuple) -> np.ndarray:
    """Counter-based gaussian grid; any (seed, t, branch) is reproducible."""
    key = [seed & _U64, ((t & 0xFFFFFF) << 3) | branch]
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(shape)


def q_sample(z0: np.ndarray, t: int, noise: np.ndarray,
             schedule: Schedule) -> np.ndarray:
    if t == 0:
        return z0.copy()
    ab = schedule.alphabars[t - 1]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * noise


def reverse_step(z: np.ndarray, eps: np.ndarray, t: int, noise: np.ndarray,
                 schedule: Schedule) -> np.ndarray:
    beta = schedule.betas[t - 1]
    ab = schedule.alphabars[t - 1]
    mean = (z - beta / np.sqrt(1.0 - ab) * eps) / np.sqrt(1.0 - beta)
    if t == 1:
        return mean
    return mean + np.sqrt(beta) * noise


def collapse_labels(labels: np.ndarray, factor: int) -> np.ndarray:
    """Downsample a label grid; the most synthesis-eager label wins.

    Indices are ordered New < Update < Keep < Ignore, so per-block
    minimum is exactly the priority rule the protocol documents.
    """
    if factor == 1:
        return labels
    h, w = labels.shape
    if h % factor or w % factor:
        raise ValueError(f"{h}x{w} labels not divisible by factor {factor}")
    blocks = labels.reshape(h // factor, factor, w // factor, factor)
    return blocks.min(axis=(1, 3))


def update_window(strength: float, T: int) -> int:
    """Steps t <= window regenerate Update regions."""
    return round(strength * T)


def blended_sample(init_latent: np.ndarray, labels: np.ndarray,
                   strength: float, seed: int, schedule: Schedule,
                   predict) -> np.ndarray:
    """Reverse process with per-step region clamping.

    New cells regenerate at every step; Update cells join for
    t <= round(strength * T); Keep and Ignore cells are re-clamped to
    the init latent's forward marginal each step and land on the init
    latent exactly.
    """
    shape = init_latent.shape
    is_new = labels == LABEL_NEW
    regen = is_new | (labels == LABEL_UPDATE)
    window = update_window(strength, schedule.T)

    z = grid_noise(seed, schedule.T, BRANCH_INIT, shape)
    for t in range(schedule.T, 0, -1):
        gen = regen if t <= window else is_new
        eps = predict(z, t)
        step_noise = (grid_noise(seed, t, BRANCH_STEP, shape)
                      if t > 1 else np.zeros(shape))
        z_hat = reverse_step(z, eps, t, step_noise, schedule)
        if t - 1 == 0:
            clamp = init_latent
        else:
            clamp = q_sample(init_latent, t - 1,
                             grid_noise(seed, t, BRANCH_CLAMP, shape), schedule)
        z = np.where(gen[..., None], z_hat, clamp)
    return z
