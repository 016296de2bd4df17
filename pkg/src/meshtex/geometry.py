"""Triangle-mesh loading, normalization, and UV-space texel baking.

Conventions:
  - positions are float64 world coordinates, faces are int32 vertex triples
  - UVs live on face corners (three per face) and must land in [0, 1]^2
  - face normals are unit length, derived from winding (right-hand rule)
  - texel centers sit at (i + 0.5) / resolution in UV space
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateMesh,
    MissingUVs,
    NonTriangulated,
    ParseError,
    ZeroCoverage,
)

log = logging.getLogger(__name__)

# UV values farther outside [0,1] than this are reported before clamping.
_UV_SLACK = 1e-6
# Residual center/extent below this counts as already normalized.
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Triangulated mesh with per-corner UVs and per-face unit normals."""

    positions: np.ndarray      # (V, 3) float64
    faces: np.ndarray          # (F, 3) int32, indices into positions
    corner_uvs: np.ndarray     # (F, 3, 2) float64 in [0, 1]
    face_normals: np.ndarray   # (F, 3) float64, unit length

    @property
    def num_vertices(self) -> int:
        return int(self.positions.shape[0])

    @property
    def num_faces(self) -> int:
        return int(self.faces.shape[0])

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box as (min, max), each shape (3,)."""
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass(frozen=True)
class TexelGeometry:
    """Per-texel surface samples baked from a mesh atlas layout."""

    resolution: int
    position: np.ndarray   # (R, R, 3) float64, row iy covers v in [iy/R, (iy+1)/R)
    normal: np.ndarray     # (R, R, 3) float64
    valid: np.ndarray      # (R, R) bool

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


def make_mesh(positions, faces, corner_uvs) -> Mesh:
    """Assemble a Mesh from raw arrays, deriving normals and validating.

    Args:
        positions: (V, 3) array-like of vertex positions.
        faces: (F, 3) array-like of vertex indices.
        corner_uvs: (F, 3, 2) array-like of per-corner UVs.

    Raises:
        ParseError: on bad shapes, out-of-range indices, or degenerate faces.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int32)
    corner_uvs = np.ascontiguousarray(corner_uvs, dtype=np.float64)

    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ParseError(f"positions must be (V, 3), got {positions.shape}")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ParseError(f"faces must be (F, 3), got {faces.shape}")
    if corner_uvs.shape != (faces.shape[0], 3, 2):
        raise ParseError(
            f"corner_uvs must be (F, 3, 2) matching {faces.shape[0]} faces, "
            f"got {corner_uvs.shape}"
        )
    if faces.size and (faces.min() < 0 or faces.max() >= len(positions)):
        raise ParseError("face index out of range")
    if not np.isfinite(positions).all() or not np.isfinite(corner_uvs).all():
        raise ParseError("non-finite vertex position or UV")

    out = corner_uvs[(corner_uvs < -_UV_SLACK) | (corner_uvs > 1.0 + _UV_SLACK)]
    if out.size:
        log.warning("clamping %d corner UV values outside [0,1]", out.size)
    corner_uvs = np.clip(corner_uvs, 0.0, 1.0)

    v0 = positions[faces[:, 0]]
    e1 = positions[faces[:, 1]] - v0
    e2 = positions[faces[:, 2]] - v0
    n = np.cross(e1, e2)
    lengths = np.sqrt((n * n).sum(axis=1))
    bad = np.flatnonzero(lengths < 1e-12)
    if bad.size:
        raise ParseError(f"face {bad[0]} is degenerate (zero area)")
    normals = n / lengths[:, None]

    return Mesh(positions, faces, corner_uvs, normals)


def _parse_face_corner(token: str, line_no: int, n_v: int, n_vt: int):
    """Split one `f` corner token into (vertex_idx, uv_idx), 0-based."""
    parts = token.split("/")
    if not parts[0]:
        raise ParseError(f"line {line_no}: face corner '{token}' has no vertex index")
    try:
        vi = int(parts[0])
        ti = int(parts[1]) if len(parts) > 1 and parts[1] else None
    except ValueError as exc:
        raise ParseError(f"line {line_no}: bad face corner '{token}'") from exc
    vi = vi - 1 if vi > 0 else n_v + vi
    if ti is not None:
        ti = ti - 1 if ti > 0 else n_vt + ti
    return vi, ti


def load_mesh(path: str) -> Mesh:
    """Parse a Wavefront OBJ file into a Mesh.

    Accepts v / vt / vn statements and triangular faces written as
    v/vt or v/vt/vn. Normals in the file are ignored; face normals are
    re-derived from winding so they are always consistent and unit length.

    Args:
        path: filesystem path of the .obj file.

    Raises:
        ParseError: malformed statement (bad floats, bad indices).
        NonTriangulated: a face with != 3 corners, named by line.
        MissingUVs: a face corner without a vt reference, named by line.
        FileNotFoundError: path does not exist.
    """
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    face_v: list[list[int]] = []
    face_vt: list[list[int]] = []

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            tag = fields[0]
            if tag == "v":
                if len(fields) < 4:
                    raise ParseError(f"line {line_no}: vertex needs 3 coordinates")
                try:
                    positions.append([float(x) for x in fields[1:4]])
                except ValueError as exc:
                    raise ParseError(f"line {line_no}: bad vertex coordinate") from exc
            elif tag == "vt":
                if len(fields) < 3:
                    raise ParseError(f"line {line_no}: vt needs 2 coordinates")
                try:
                    uvs.append([float(fields[1]), float(fields[2])])
                except ValueError as exc:
                    raise ParseError(f"line {line_no}: bad texture coordinate") from exc
            elif tag == "f":
                corners = fields[1:]
                if len(corners) != 3:
                    raise NonTriangulated(
                        f"line {line_no}: face has {len(corners)} corners, "
                        f"triangulate the mesh first"
                    )
                vi_list, ti_list = [], []
                for token in corners:
                    vi, ti = _parse_face_corner(token, line_no, len(positions), len(uvs))
                    if ti is None:
                        raise MissingUVs(
                            f"line {line_no}: face corner '{token}' has no UV; "
                            f"the texture atlas needs per-corner UVs"
                        )
                    vi_list.append(vi)
                    ti_list.append(ti)
                face_v.append(vi_list)
                face_vt.append(ti_list)
            # vn, o, g, s, usemtl, mtllib carry nothing we need

    if not face_v:
        raise ParseError(f"{path}: no faces found")

    positions_arr = np.asarray(positions, dtype=np.float64)
    uvs_arr = np.asarray(uvs, dtype=np.float64)
    faces_arr = np.asarray(face_v, dtype=np.int64)
    vt_arr = np.asarray(face_vt, dtype=np.int64)

    if faces_arr.min() < 0 or faces_arr.max() >= len(positions_arr):
        raise ParseError("face references a vertex that does not exist")
    if vt_arr.min() < 0 or (uvs_arr.size == 0) or vt_arr.max() >= len(uvs_arr):
        raise ParseError("face references a vt that does not exist")

    corner_uvs = uvs_arr[vt_arr]  # (F, 3, 2)
    return make_mesh(positions_arr, faces_arr, corner_uvs)


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Center the AABB at the origin and scale the longest axis to 1.0.

    Scaling is uniform, so UVs and normals are untouched. A mesh that is
    already normalized (within 1e-12) is returned unchanged, which makes
    the operation exactly idempotent.

    Raises:
        DegenerateMesh: zero extent in all axes.
    """
    lo, hi = mesh.aabb()
    extent = hi - lo
    max_extent = float(extent.max())
    if max_extent < 1e-12:
        raise DegenerateMesh("mesh has zero extent in all axes")

    center = (lo + hi) * 0.5
    if abs(max_extent - 1.0) <= _NORM_EPS and np.abs(center).max() <= _NORM_EPS:
        return mesh

    scaled = (mesh.positions - center) * (1.0 / max_extent)
    return Mesh(scaled, mesh.faces, mesh.corner_uvs, mesh.face_normals)


def bake_texel_geometry(mesh: Mesh, resolution: int) -> TexelGeometry:
    """Rasterize faces in UV space and record surface samples per texel.

    For every texel whose center lies inside a face's UV triangle, stores
    the barycentric interpolation of that face's vertex positions and the
    face normal. Overlapping UV charts resolve first-writer-wins in face
    order, with a warning naming how many texels collided.

    Raises:
        ZeroCoverage: no texel center inside any UV triangle.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")

    R = resolution
    position = np.zeros((R, R, 3), dtype=np.float64)
    normal = np.zeros((R, R, 3), dtype=np.float64)
    valid = np.zeros((R, R), dtype=bool)
    overlap = 0

    for fi in range(mesh.num_faces):
        uv = mesh.corner_uvs[fi] * R  # triangle in texel units
        lo = np.floor(uv.min(axis=0) - 0.5).astype(int)
        hi = np.ceil(uv.max(axis=0) - 0.5).astype(int)
        x0, y0 = np.maximum(lo, 0)
        x1, y1 = np.minimum(hi, R - 1)
        if x1 < x0 or y1 < y0:
            continue

        a, b, c = uv
        area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(area) < 1e-14:
            continue  # degenerate in UV space, covers nothing

        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        px, py = np.meshgrid(xs, ys)

        w0 = ((b[0] - px) * (c[1] - py) - (b[1] - py) * (c[0] - px)) / area
        w1 = ((c[0] - px) * (a[1] - py) - (c[1] - py) * (a[0] - px)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-12) & (w1 >= -1e-12) & (w2 >= -1e-12)
        if not inside.any():
            continue

        block = np.s_[y0:y1 + 1, x0:x1 + 1]
        already = valid[block]
        overlap += int((inside & already).sum())
        write = inside & ~already

        tri = mesh.positions[mesh.faces[fi]]  # (3, 3)
        pos = (w0[..., None] * tri[0]
               + w1[..., None] * tri[1]
               + w2[..., None] * tri[2])
        position[block][write] = pos[write]
        normal[block][write] = mesh.face_normals[fi]
        valid[block] |= write

    if overlap:
        log.warning("UV charts overlap on %d texels; first face kept", overlap)
    if not valid.any():
        raise ZeroCoverage(
            f"no texel center falls inside any UV triangle at resolution {R}"
        )

    return TexelGeometry(R, position, normal, valid)
