"""Seeded DDPM sampling with per-step mask blending.

Forward process: z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps, where
abar_t is the running product of (1 - beta_s). The reverse step is the
epsilon-parameterized posterior mean plus sqrt(beta_t) noise (none at
t = 1). Mask blending re-noises every pixel outside the step's generate
set to the forward-process marginal of the init latent, so pixels that
are never generated come back bit-exactly.

All randomness is counter-based: one Philox stream per (seed, step,
branch), filled position-indexed over the grid. Two runs with the same
seed produce identical bits regardless of how the loop is scheduled.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRange, ShapeMismatch, StepOutOfRange
from .raster import ViewImage
from .texstate import GenerationMask, MaskLabel

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 2e-2

# noise stream branches
_BRANCH_INIT = 0
_BRANCH_STEP = 1
_BRANCH_CLAMP = 2


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    betas: np.ndarray      # (T,) float64
    alphabars: np.ndarray  # (T,) float64, alphabars[t-1] = prod(1 - betas[:t])


def make_linear_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta schedule with cumulative-product alphabars.

    Raises:
        InvalidRange: T < 1 or betas outside (0, 1) or start > end.
    """
    if T < 1:
        raise InvalidRange(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidRange(
            f"betas must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphabars = np.cumprod(1.0 - betas)
    return NoiseSchedule(T, betas, alphabars)


def alphabar(schedule: NoiseSchedule, t: int) -> float:
    """Cumulative product at step t, with the t = 0 boundary equal to 1."""
    if not 0 <= t <= schedule.T:
        raise StepOutOfRange(f"t must be in [0, {schedule.T}], got {t}")
    if t == 0:
        return 1.0
    return float(schedule.alphabars[t - 1])


@dataclass(frozen=True)
class Latent:
    """Dense latent grid; with the identity codec this is just RGB."""

    values: np.ndarray  # (H, W, C) float64

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeMismatch(f"latent must be (H, W, C), got {self.values.shape}")

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def channels(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True)
class SamplerConfig:
    strength: float
    seed: int
    schedule: NoiseSchedule

    def __post_init__(self):
        if not 0.0 < self.strength <= 1.0:
            raise InvalidRange(f"strength must be in (0, 1], got {self.strength}")


@dataclass(frozen=True)
class Conditioning:
    prompt: str
    depth: np.ndarray      # (H, W) float64, normalized, 1.0 = background
    init_view: ViewImage   # current render of the view


class IdentityCodec:
    """Latent space == RGB pixel space. decode(encode(x)) is exact."""

    def encode(self, image: ViewImage) -> Latent:
        return Latent(image.rgb.copy())

    def decode(self, latent: Latent) -> ViewImage:
        return ViewImage(np.clip(latent.values, 0.0, 1.0))


def q_sample(z0: Latent, t: int, noise: np.ndarray, schedule: NoiseSchedule) -> Latent:
    """Forward-process marginal: noise z0 to step t in one jump.

    t = 0 returns z0 unchanged (identity boundary).

    Raises:
        StepOutOfRange, ShapeMismatch.
    """
    ab = alphabar(schedule, t)  # validates t
    if t == 0:
        return Latent(z0.values.copy())
    if noise.shape != z0.values.shape:
        raise ShapeMismatch(f"noise {noise.shape} vs latent {z0.values.shape}")
    return Latent(np.sqrt(ab) * z0.values + np.sqrt(1.0 - ab) * noise)


def ddpm_step(z_t: Latent, eps_hat: np.ndarray, t: int, noise: np.ndarray,
              schedule: NoiseSchedule) -> Latent:
    """One reverse step t -> t-1; sigma_t = sqrt(beta_t), zero at t = 1.

    Raises:
        StepOutOfRange, ShapeMismatch.
    """
    if not 1 <= t <= schedule.T:
        raise StepOutOfRange(f"t must be in [1, {schedule.T}], got {t}")
    if eps_hat.shape != z_t.values.shape:
        raise ShapeMismatch(f"eps {eps_hat.shape} vs latent {z_t.values.shape}")
    beta = float(schedule.betas[t - 1])
    ab = alphabar(schedule, t)
    mean = (z_t.values - (beta / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(1.0 - beta)
    if t == 1:
        return Latent(mean)
    if noise.shape != z_t.values.shape:
        raise ShapeMismatch(f"noise {noise.shape} vs latent {z_t.values.shape}")
    return Latent(mean + np.sqrt(beta) * noise)


def grid_noise(seed: int, step: int, branch: int, shape: tuple) -> np.ndarray:
    """Unit Gaussian grid from a counter-based stream keyed (seed, step, branch).

    Position-indexed: the value at a grid index never depends on what
    other shapes were drawn before, only on the key.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64((step << 8) | (branch & 0xFF))], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal(shape, dtype=np.float64)


# --- toy denoiser ------------------------------------------------------------

_NAMED_COLORS = {
    "red": (0.82, 0.12, 0.10),
    "orange": (0.95, 0.55, 0.10),
    "yellow": (0.95, 0.85, 0.15),
    "green": (0.15, 0.65, 0.25),
    "teal": (0.10, 0.60, 0.60),
    "blue": (0.15, 0.30, 0.80),
    "purple": (0.50, 0.20, 0.70),
    "magenta": (0.85, 0.20, 0.60),
    "brown": (0.45, 0.30, 0.15),
    "white": (0.92, 0.92, 0.92),
    "gray": (0.55, 0.55, 0.55),
    "black": (0.08, 0.08, 0.08),
}
_FALLBACK_PALETTE = tuple(_NAMED_COLORS.values())


def prompt_color(prompt: str) -> np.ndarray:
    """Deterministic RGB for a prompt: named color if present, else hashed."""
    for word in prompt.lower().replace("-", " ").replace(",", " ").split():
        if word in _NAMED_COLORS:
            return np.array(_NAMED_COLORS[word], dtype=np.float64)
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    idx = int.from_bytes(digest[:4], "big") % len(_FALLBACK_PALETTE)
    return np.array(_FALLBACK_PALETTE[idx], dtype=np.float64)


class ToyPredictor:
    """Deterministic stand-in denoiser with a closed-form fixed point.

    Predicts exactly the noise that separates z_t from a prompt-colored,
    depth-shaded target, so the reverse process lands on the target.
    Foreground (depth < 1) gets palette_color * (1.25 - 0.5 * depth)
    clamped to [0, 1]; background keeps the init view.
    """

    def __init__(self, schedule: NoiseSchedule, codec=None):
        self.schedule = schedule
        self.codec = codec if codec is not None else IdentityCodec()
        self._memo: dict[int, tuple] = {}

    def target_latent(self, cond: Conditioning, shape: tuple) -> np.ndarray:
        cached = self._memo.get(id(cond))
        if cached is not None and cached[0] is cond:
            return cached[1]
        depth = cond.depth
        if depth.shape != shape[:2]:
            raise ShapeMismatch(f"depth {depth.shape} vs latent {shape[:2]}")
        color = prompt_color(cond.prompt)
        shade = np.clip(color[None, None, :] * (1.25 - 0.5 * depth[..., None]), 0.0, 1.0)
        init = self.codec.encode(cond.init_view).values
        if init.shape != shape:
            raise ShapeMismatch(f"init view {init.shape} vs latent {shape}")
        foreground = depth < 1.0
        target = np.where(foreground[..., None], shade, init)
        self._memo = {id(cond): (cond, target)}  # hold one entry, keep cond alive
        return target

    def predict(self, z_t: Latent, t: int, cond: Conditioning) -> np.ndarray:
        ab = alphabar(self.schedule, t)
        if not ab < 1.0:
            raise StepOutOfRange("predict needs t >= 1")
        target = self.target_latent(cond, z_t.values.shape)
        return (z_t.values - np.sqrt(ab) * target) / np.sqrt(1.0 - ab)


def generate_window(strength: float, T: int) -> int:
    """Last (smallest-noise) step count during which Update pixels regenerate."""
    return round(strength * T)


def masked_sample(
    init: Latent,
    mask: GenerationMask,
    config: SamplerConfig,
    predictor,
    cond: Conditioning,
) -> Latent:
    """Run the reverse process with per-step mask blending.

    New pixels regenerate at every step (strength 1). Update pixels
    regenerate only for t <= round(strength * T), i.e. they start from
    the init latent noised to that step. Keep and Ignore pixels are
    re-clamped to the init forward marginal each step and finish
    bit-exact to init.

    Raises:
        ShapeMismatch: mask/latent/predictor shapes disagree.
    """
    shape = init.values.shape
    if mask.resolution != init.height or mask.resolution != init.width:
        raise ShapeMismatch(
            f"mask {mask.resolution} vs latent {init.height}x{init.width}"
        )

    schedule = config.schedule
    T = schedule.T
    t_start = generate_window(config.strength, T)

    is_new = mask.labels == int(MaskLabel.NEW)
    with_update = is_new | (mask.labels == int(MaskLabel.UPDATE))

    z = Latent(grid_noise(config.seed, T, _BRANCH_INIT, shape))
    for t in range(T, 0, -1):
        gen = with_update if t <= t_start else is_new

        eps_hat = predictor.predict(z, t, cond)
        if eps_hat.shape != shape:
            raise ShapeMismatch(f"predictor returned {eps_hat.shape}, want {shape}")

        step_noise = grid_noise(config.seed, t, _BRANCH_STEP, shape) if t > 1 else np.zeros(shape)
        z_hat = ddpm_step(z, eps_hat, t, step_noise, schedule)

        if t - 1 == 0:
            clamp = init
        else:
            clamp_noise = grid_noise(config.seed, t, _BRANCH_CLAMP, shape)
            clamp = q_sample(init, t - 1, clamp_noise, schedule)

        z = Latent(np.where(gen[..., None], z_hat.values, clamp.values))
    return z
