"""Software rasterizer: coverage, depth, barycentrics, view similarity.

Coverage follows pixel centers with the top-left fill rule, so faces
sharing an edge never double-own or orphan a pixel. The depth test is
nearest-wins on linear normalized depth. Back faces (eye on the far
side of the face plane) are culled, which keeps similarity positive on
every covered pixel. Barycentrics are perspective-corrected, i.e. they
interpolate world-space attributes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .geometry import Mesh

UNPAINTED_GRAY = (0.5, 0.5, 0.5)

# Foreground depth is kept strictly below the background sentinel 1.0.
_DEPTH_CEIL_GAP = 1e-9


@dataclass(frozen=True)
class GBuffer:
    resolution: int
    depth: np.ndarray         # (R, R) float64, 1.0 = background
    face_id: np.ndarray       # (R, R) int32, -1 = background
    barycentrics: np.ndarray  # (R, R, 3) float64, zeros on background
    similarity: np.ndarray    # (R, R) float64, 0 on background

    def coverage(self) -> np.ndarray:
        return self.face_id >= 0


@dataclass(frozen=True)
class ViewImage:
    rgb: np.ndarray  # (R, R, 3) float64 in [0, 1]

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValueError(f"view image must be (R, R, 3), got {self.rgb.shape}")
        if not np.isfinite(self.rgb).all():
            raise ValueError("view image contains non-finite values")

    @property
    def resolution(self) -> int:
        return int(self.rgb.shape[0])


def rasterize(mesh: Mesh, camera: Camera) -> GBuffer:
    res = camera.image_resolution
    depth = np.ones((res, res), dtype=np.float64)
    face_id = np.full((res, res), -1, dtype=np.int32)
    bary = np.zeros((res, res, 3), dtype=np.float64)

    # project all vertices once
    hom = np.concatenate([mesh.positions, np.ones((mesh.num_vertices, 1))], axis=1)
    cam = hom @ camera.view_transform.T
    z_cam = -cam[:, 2]
    clip = cam @ camera.projection.T
    w = clip[:, 3]
    safe_w = np.where(np.abs(w) < 1e-12, 1e-12, w)
    px = (clip[:, 0] / safe_w * 0.5 + 0.5) * res
    py = (0.5 - clip[:, 1] / safe_w * 0.5) * res

    depth_range = camera.far - camera.near

    for fi in range(mesh.num_faces):
        idx = mesh.faces[fi]
        # cull: keep only faces whose front side faces the eye
        to_eye = camera.eye - mesh.positions[idx[0]]
        if float(mesh.face_normals[fi] @ to_eye) <= 0.0:
            continue
        if np.any(z_cam[idx] <= camera.near * 0.5):
            continue  # pokes behind the eye plane; no clipping support

        tx = px[idx]
        ty = py[idx]
        area2 = (tx[1] - tx[0]) * (ty[2] - ty[0]) - (ty[1] - ty[0]) * (tx[2] - tx[0])
        if area2 == 0.0:
            continue
        orient = 1.0 if area2 > 0.0 else -1.0

        x0 = max(0, int(np.floor(tx.min() - 0.5)))
        x1 = min(res - 1, int(np.ceil(tx.max() - 0.5)))
        y0 = max(0, int(np.floor(ty.min() - 0.5)))
        y1 = min(res - 1, int(np.ceil(ty.max() - 0.5)))
        if x1 < x0 or y1 < y0:
            continue

        gx, gy = np.meshgrid(
            np.arange(x0, x1 + 1, dtype=np.float64) + 0.5,
            np.arange(y0, y1 + 1, dtype=np.float64) + 0.5,
        )

        cover = None
        edges = []
        for i, j in ((1, 2), (2, 0), (0, 1)):  # edge opposite vertex k
            dx = (tx[j] - tx[i]) * orient
            dy = (ty[j] - ty[i]) * orient
            e = dx * (gy - ty[i]) - dy * (gx - tx[i])
            # top-left rule: boundary pixels belong to top or left edges only
            accept = (e > 0.0) | ((e == 0.0) & ((dy < 0.0) | ((dy == 0.0) & (dx > 0.0))))
            cover = accept if cover is None else (cover & accept)
            edges.append(e)

        if not cover.any():
            continue

        abs_area = area2 * orient
        s0 = edges[0] / abs_area
        s1 = edges[1] / abs_area
        s2 = edges[2] / abs_area

        # perspective correction to world-space barycentrics
        iw = 1.0 / w[idx]
        b0 = s0 * iw[0]
        b1 = s1 * iw[1]
        b2 = s2 * iw[2]
        bsum = b0 + b1 + b2
        b0 = b0 / bsum
        b1 = b1 / bsum
        b2 = b2 / bsum

        zc = b0 * z_cam[idx[0]] + b1 * z_cam[idx[1]] + b2 * z_cam[idx[2]]
        d = (zc - camera.near) / depth_range
        d = np.clip(d, 0.0, 1.0 - _DEPTH_CEIL_GAP)

        block = np.s_[y0:y1 + 1, x0:x1 + 1]
        win = cover & (d < depth[block])
        if not win.any():
            continue
        depth[block][win] = d[win]
        face_id[block][win] = fi
        sub = bary[block]
        sub[win, 0] = b0[win]
        sub[win, 1] = b1[win]
        sub[win, 2] = b2[win]

    similarity = _similarity_from_buffers(mesh, camera, face_id, bary)
    return GBuffer(res, depth, face_id, bary, similarity)


def _similarity_from_buffers(mesh, camera, face_id, bary) -> np.ndarray:
    """max(0, -n.d) per covered pixel, from stored face ids + barycentrics."""
    res = face_id.shape[0]
    sim = np.zeros((res, res), dtype=np.float64)
    ys, xs = np.nonzero(face_id >= 0)
    if len(ys) == 0:
        return sim
    f = face_id[ys, xs]
    b = bary[ys, xs]
    tri = mesh.positions[mesh.faces[f]]  # (N, 3, 3)
    pos = (b[:, 0, None] * tri[:, 0]
           + b[:, 1, None] * tri[:, 1]
           + b[:, 2, None] * tri[:, 2])
    d = pos - camera.eye
    norm = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
    u = d / norm[:, None]
    n = mesh.face_normals[f]
    dot = n[:, 0] * u[:, 0] + n[:, 1] * u[:, 1] + n[:, 2] * u[:, 2]
    sim[ys, xs] = np.maximum(0.0, -dot)
    return sim


def pixel_uvs(gbuffer: GBuffer, mesh: Mesh):
    """Interpolate per-corner UVs at covered pixels.

    Returns (uv, covered): uv is (R, R, 2) with zeros on background,
    covered is the boolean coverage grid.
    """
    covered = gbuffer.coverage()
    uv = np.zeros((gbuffer.resolution, gbuffer.resolution, 2), dtype=np.float64)
    ys, xs = np.nonzero(covered)
    if len(ys):
        f = gbuffer.face_id[ys, xs]
        b = gbuffer.barycentrics[ys, xs]
        cuv = mesh.corner_uvs[f]  # (N, 3, 2)
        uv[ys, xs] = (b[:, 0, None] * cuv[:, 0]
                      + b[:, 1, None] * cuv[:, 1]
                      + b[:, 2, None] * cuv[:, 2])
    return uv, covered


def uv_to_texel(uv: np.ndarray, resolution: int):
    """Map UVs in [0,1] to integer texel indices (ix, iy), clamped."""
    scaled = np.clip((uv * resolution).astype(np.int64), 0, resolution - 1)
    return scaled[..., 0], scaled[..., 1]


def render_view(mesh: Mesh, atlas, gbuffer: GBuffer,
                unpainted_color=UNPAINTED_GRAY) -> ViewImage:
    """Nearest-texel render of the atlas through a rasterized view.

    Unpainted texels and background pixels both show unpainted_color.
    """
    res = gbuffer.resolution
    rgb = np.empty((res, res, 3), dtype=np.float64)
    rgb[:] = np.asarray(unpainted_color, dtype=np.float64)

    uv, covered = pixel_uvs(gbuffer, mesh)
    ys, xs = np.nonzero(covered)
    if len(ys):
        ix, iy = uv_to_texel(uv[ys, xs], atlas.resolution)
        painted = atlas.painted[iy, ix]
        colors = np.where(painted[:, None], atlas.rgb[iy, ix],
                          np.asarray(unpainted_color, dtype=np.float64))
        rgb[ys, xs] = colors
    return ViewImage(rgb)
