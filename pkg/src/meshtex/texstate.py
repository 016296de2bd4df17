"""Texture atlas state, view partitioning, and texel back-projection.

The atlas remembers, per texel, the best viewing similarity seen so
far. Each synthesized view is partitioned into four pixel classes:

    New     texel under the pixel is unpainted
    Update  painted, and this view sees it strictly better
    Keep    painted, and this view sees it no better
    Ignore  background

Back-projection walks texels (not pixels): every valid texel projects
into the view, and is written only when visible (depth agreement),
allowed by the pixel label, and strictly better than its stored
similarity. That makes best_similarity non-decreasing for all time.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .camera import Camera, project_points
from .errors import IndivisibleFactor, ResolutionMismatch
from .geometry import Mesh, TexelGeometry
from .raster import GBuffer, ViewImage, pixel_uvs, uv_to_texel

DEPTH_EPSILON = 0.01  # occlusion agreement bound, normalized depth units


class MaskLabel(IntEnum):
    # numeric order doubles as priority order for downsampling
    NEW = 0
    UPDATE = 1
    KEEP = 2
    IGNORE = 3


@dataclass(frozen=True)
class GenerationMask:
    labels: np.ndarray  # (R, R) uint8 of MaskLabel values

    @property
    def resolution(self) -> int:
        return int(self.labels.shape[0])

    def count(self, label: MaskLabel) -> int:
        return int((self.labels == label).sum())

    def counts(self) -> dict[str, int]:
        return {lab.name.lower(): self.count(lab) for lab in MaskLabel}


@dataclass
class TextureAtlas:
    resolution: int
    rgb: np.ndarray              # (R, R, 3) float64
    painted: np.ndarray          # (R, R) bool
    best_similarity: np.ndarray  # (R, R) float64, 0 where unpainted

    @classmethod
    def empty(cls, resolution: int) -> "TextureAtlas":
        return cls(
            resolution=resolution,
            rgb=np.zeros((resolution, resolution, 3), dtype=np.float64),
            painted=np.zeros((resolution, resolution), dtype=bool),
            best_similarity=np.zeros((resolution, resolution), dtype=np.float64),
        )

    def coverage(self, texgeo: TexelGeometry) -> float:
        """Fraction of valid texels painted."""
        n_valid = texgeo.valid_count
        if n_valid == 0:
            return 0.0
        return float((self.painted & texgeo.valid).sum()) / n_valid

    def copy(self) -> "TextureAtlas":
        return TextureAtlas(self.resolution, self.rgb.copy(),
                            self.painted.copy(), self.best_similarity.copy())


def partition_view(gbuffer: GBuffer, mesh: Mesh, atlas: TextureAtlas) -> GenerationMask:
    """Classify each pixel of a view against the current atlas."""
    res = gbuffer.resolution
    labels = np.full((res, res), int(MaskLabel.IGNORE), dtype=np.uint8)

    uv, covered = pixel_uvs(gbuffer, mesh)
    ys, xs = np.nonzero(covered)
    if len(ys):
        ix, iy = uv_to_texel(uv[ys, xs], atlas.resolution)
        painted = atlas.painted[iy, ix]
        better = gbuffer.similarity[ys, xs] > atlas.best_similarity[iy, ix]
        lab = np.where(painted,
                       np.where(better, int(MaskLabel.UPDATE), int(MaskLabel.KEEP)),
                       int(MaskLabel.NEW))
        labels[ys, xs] = lab.astype(np.uint8)
    return GenerationMask(labels)


def downsample_mask(mask: GenerationMask, factor: int) -> GenerationMask:
    """Shrink a mask by an integer factor with priority voting.

    Each factor x factor block takes the highest-priority label present:
    New > Update > Keep > Ignore. Factor 1 returns an identical copy.

    Raises:
        IndivisibleFactor: resolution not divisible by factor.
    """
    if factor < 1:
        raise IndivisibleFactor(f"factor must be >= 1, got {factor}")
    res = mask.resolution
    if res % factor != 0:
        raise IndivisibleFactor(f"mask resolution {res} not divisible by {factor}")
    if factor == 1:
        return GenerationMask(mask.labels.copy())
    small = res // factor
    blocks = mask.labels.reshape(small, factor, small, factor)
    return GenerationMask(blocks.min(axis=(1, 3)).astype(np.uint8))


def _bilinear_sample(rgb: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Sample (H, W, 3) at continuous pixel coords, centers at i + 0.5."""
    h, w = rgb.shape[:2]
    fx = px - 0.5
    fy = py - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    tx = (fx - x0)[:, None]
    ty = (fy - y0)[:, None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    top = rgb[y0c, x0c] * (1.0 - tx) + rgb[y0c, x1c] * tx
    bot = rgb[y1c, x0c] * (1.0 - tx) + rgb[y1c, x1c] * tx
    return top * (1.0 - ty) + bot * ty


def back_project(
    image: ViewImage,
    mask: GenerationMask,
    camera: Camera,
    gbuffer: GBuffer,
    texgeo: TexelGeometry,
    atlas: TextureAtlas,
    depth_eps: float = DEPTH_EPSILON,
) -> int:
    """Write a synthesized view into the atlas, texel-driven.

    Returns the number of texels written.

    Raises:
        ResolutionMismatch: image/mask/gbuffer resolutions disagree, or
            atlas and texel geometry disagree.
    """
    res = gbuffer.resolution
    if image.resolution != res or mask.resolution != res:
        raise ResolutionMismatch(
            f"image {image.resolution}, mask {mask.resolution}, "
            f"gbuffer {res} must share one resolution"
        )
    if atlas.resolution != texgeo.resolution:
        raise ResolutionMismatch(
            f"atlas {atlas.resolution} vs texel geometry {texgeo.resolution}"
        )

    t_iy, t_ix = np.nonzero(texgeo.valid)
    if len(t_iy) == 0:
        return 0
    pos = texgeo.position[t_iy, t_ix]
    nrm = texgeo.normal[t_iy, t_ix]

    px, py, tex_depth, z_cam = project_points(camera, pos)
    in_frame = (z_cam > camera.near) & (px >= 0) & (px < res) & (py >= 0) & (py < res)

    pix_x = np.clip(np.floor(px).astype(np.int64), 0, res - 1)
    pix_y = np.clip(np.floor(py).astype(np.int64), 0, res - 1)

    visible = in_frame & (np.abs(tex_depth - gbuffer.depth[pix_y, pix_x]) <= depth_eps)

    d = pos - camera.eye
    norm = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
    u = d / norm[:, None]
    dot = nrm[:, 0] * u[:, 0] + nrm[:, 1] * u[:, 1] + nrm[:, 2] * u[:, 2]
    sim = np.maximum(0.0, -dot)

    lab = mask.labels[pix_y, pix_x]
    allowed = (lab == int(MaskLabel.NEW)) | (lab == int(MaskLabel.UPDATE))

    write = visible & allowed & (sim > atlas.best_similarity[t_iy, t_ix])
    if not write.any():
        return 0

    w_iy = t_iy[write]
    w_ix = t_ix[write]
    atlas.rgb[w_iy, w_ix] = _bilinear_sample(image.rgb, px[write], py[write])
    atlas.painted[w_iy, w_ix] = True
    atlas.best_similarity[w_iy, w_ix] = sim[write]
    return int(write.sum())
