"""Command-line interface: generate, turntable, validate.

`generate` runs the full pipeline and writes texture.png, model.obj,
model.mtl, and report.json into --out (plus debug/ with --debug-dumps).
A report.json is written even when the run fails, so every invocation
leaves a post-mortem. `turntable` renders an exported model from a
ring of azimuths. `validate` loads, normalizes, and bakes a mesh and
reports what the pipeline would see.

Config precedence: command-line flags > --config file (TOML or JSON)
> built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import pngio
from .camera import Viewpoint, viewpoint_to_camera
from .errors import MeshTexError
from .geometry import Mesh, bake_texel_geometry, load_mesh, normalize_mesh
from .pipeline import HeatWeights, PipelineConfig, RunReport, run_full
from .raster import rasterize, render_view
from .texstate import TextureAtlas

TEXTURE_NAME = "texture.png"
OBJ_NAME = "model.obj"
MTL_NAME = "model.mtl"
REPORT_NAME = "report.json"
MATERIAL_NAME = "textured"


# --- export / import of the textured model ----------------------------------

def atlas_to_png_bytes(atlas: TextureAtlas, unpainted_color=(0.5, 0.5, 0.5)) -> bytes:
    """Quantize the atlas to an 8-bit PNG; texel row 0 is the image's bottom."""
    rgb = np.where(atlas.painted[..., None], atlas.rgb,
                   np.asarray(unpainted_color, dtype=np.float64))
    return pngio.encode_rgb8(rgb[::-1])


def atlas_from_png_bytes(data: bytes) -> TextureAtlas:
    """Load a texture PNG as a fully painted atlas."""
    rgb = pngio.decode_rgb8(data)[::-1]
    if rgb.shape[0] != rgb.shape[1]:
        raise MeshTexError(f"texture must be square, got {rgb.shape[:2]}")
    res = rgb.shape[0]
    return TextureAtlas(
        resolution=res,
        rgb=np.ascontiguousarray(rgb),
        painted=np.ones((res, res), dtype=bool),
        best_similarity=np.ones((res, res), dtype=np.float64),
    )


def export_textured_obj(mesh: Mesh, atlas: TextureAtlas, out_dir: str,
                        unpainted_color=(0.5, 0.5, 0.5)) -> None:
    """Write model.obj + model.mtl + texture.png into out_dir."""
    pngio.save_png(os.path.join(out_dir, TEXTURE_NAME),
                   atlas_to_png_bytes(atlas, unpainted_color))

    with open(os.path.join(out_dir, MTL_NAME), "w", encoding="utf-8") as fh:
        fh.write(f"newmtl {MATERIAL_NAME}\n")
        fh.write("Ka 1.0 1.0 1.0\nKd 1.0 1.0 1.0\nKs 0.0 0.0 0.0\n")
        fh.write(f"map_Kd {TEXTURE_NAME}\n")

    lines = [f"mtllib {MTL_NAME}"]
    for p in mesh.positions:
        lines.append(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
    for fi in range(mesh.num_faces):
        for c in range(3):
            u, v = mesh.corner_uvs[fi, c]
            lines.append(f"vt {u:.9g} {v:.9g}")
    for fi in range(mesh.num_faces):
        n = mesh.face_normals[fi]
        lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
    lines.append(f"usemtl {MATERIAL_NAME}")
    for fi in range(mesh.num_faces):
        t = 3 * fi
        refs = " ".join(
            f"{mesh.faces[fi, c] + 1}/{t + c + 1}/{fi + 1}" for c in range(3)
        )
        lines.append(f"f {refs}")
    with open(os.path.join(out_dir, OBJ_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def find_mtl_texture(obj_path: str) -> str | None:
    """Follow mtllib/map_Kd from an OBJ to its texture path, if any."""
    base = os.path.dirname(os.path.abspath(obj_path))
    mtl_path = None
    with open(obj_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("mtllib"):
                mtl_path = os.path.join(base, line.split(None, 1)[1].strip())
                break
    if mtl_path is None or not os.path.exists(mtl_path):
        return None
    with open(mtl_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip().startswith("map_Kd"):
                return os.path.join(base, line.split(None, 1)[1].strip())
    return None


# --- config loading ----------------------------------------------------------

def load_config_file(path: str) -> dict:
    """Read a TOML or JSON config file into a flat dict."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".json"):
        return json.loads(raw.decode("utf-8"))
    try:
        import tomllib as toml  # 3.11+
    except ModuleNotFoundError:
        import tomli as toml
    return toml.loads(raw.decode("utf-8"))


_CONFIG_KEYS = {
    "prompt", "gamma_g", "gamma_r", "image_resolution", "texture_resolution",
    "n_refine_select", "heat_stop_threshold", "seed", "backend", "steps",
    "camera_distance", "fov_deg", "depth_eps", "disable_partition",
    "disable_update", "weights",
}


def build_pipeline_config(args) -> PipelineConfig:
    file_cfg = load_config_file(args.config) if args.config else {}
    unknown = set(file_cfg) - _CONFIG_KEYS
    if unknown:
        raise MeshTexError(f"unknown config keys: {', '.join(sorted(unknown))}")

    merged = dict(file_cfg)

    def flag(name, value):
        if value is not None:
            merged[name] = value

    flag("prompt", args.prompt)
    flag("gamma_g", args.gamma_g)
    flag("gamma_r", args.gamma_r)
    flag("image_resolution", args.image_res)
    flag("texture_resolution", args.tex_res)
    flag("n_refine_select", args.refine_views)
    flag("seed", args.seed)
    flag("backend", args.backend)
    flag("steps", args.steps)
    if args.disable_partition:
        merged["disable_partition"] = True
    if args.disable_update:
        merged["disable_update"] = True

    if args.deterministic and "seed" not in merged:
        raise MeshTexError("--deterministic requires an explicit seed")
    if isinstance(merged.get("weights"), dict):
        merged["weights"] = HeatWeights(**merged["weights"])

    config = PipelineConfig(**merged)
    if args.debug_dumps:
        config.debug_dir = os.path.join(args.out, "debug")
    return config.validate()


# --- subcommands -------------------------------------------------------------

def cmd_generate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    report = RunReport()
    try:
        config = build_pipeline_config(args)
        mesh = normalize_mesh(load_mesh(args.mesh))
        atlas, report = run_full(mesh, config, report)
        export_textured_obj(mesh, atlas, args.out, config.unpainted_color)
    except (MeshTexError, FileNotFoundError, ValueError, OSError) as exc:
        report.status = "error"
        report.error = f"{type(exc).__name__}: {exc}"
        _write_report(args.out, report)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_report(args.out, report)
    print(f"textured {args.mesh} with {report.total_views} views, "
          f"coverage {report.final_coverage:.1%}; outputs in {args.out}/")
    return 0


def _write_report(out_dir: str, report: RunReport) -> None:
    with open(os.path.join(out_dir, REPORT_NAME), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")


def cmd_turntable(args) -> int:
    try:
        mesh = normalize_mesh(load_mesh(args.model))
        texture = args.texture or find_mtl_texture(args.model)
        if texture is None:
            raise MeshTexError(
                f"{args.model} references no texture; pass --texture"
            )
        with open(texture, "rb") as fh:
            atlas = atlas_from_png_bytes(fh.read())
        os.makedirs(args.out, exist_ok=True)
        for k in range(args.frames):
            theta = 360.0 * k / args.frames
            vp = Viewpoint(theta, args.elevation, args.distance)
            camera = viewpoint_to_camera(vp, args.image_res)
            gb = rasterize(mesh, camera)
            frame = render_view(mesh, atlas, gb)
            pngio.save_png(os.path.join(args.out, f"frame_{k:03d}.png"),
                           pngio.encode_rgb8(frame.rgb))
    except (MeshTexError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.frames} frames to {args.out}/")
    return 0


def cmd_validate(args) -> int:
    try:
        mesh = load_mesh(args.mesh)
        normalized = normalize_mesh(mesh)
        texgeo = bake_texel_geometry(normalized, args.tex_res)
    except (MeshTexError, FileNotFoundError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    lo, hi = normalized.aabb()
    frac = texgeo.valid_count / float(args.tex_res**2)
    print(f"mesh: {mesh.num_vertices} vertices, {mesh.num_faces} triangles")
    print(f"normalized aabb: min {np.round(lo, 6).tolist()} max {np.round(hi, 6).tolist()}")
    print(f"texels covered at {args.tex_res}: {texgeo.valid_count} "
          f"({frac:.1%} of the atlas)")
    print("ok")
    return 0


# --- argument parsing --------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshtex",
        description="Text-driven progressive texturing for triangle meshes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="texture a mesh from a prompt")
    g.add_argument("--mesh", required=True, help="input OBJ (triangulated, with UVs)")
    g.add_argument("--prompt", default=None, help="text prompt driving synthesis")
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--backend", default=None,
                   help="'local' or base URL of a served backend")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--image-res", type=int, default=None, help="render resolution")
    g.add_argument("--tex-res", type=int, default=None, help="texture resolution")
    g.add_argument("--gamma-g", type=float, default=None,
                   help="denoising strength for generation views")
    g.add_argument("--gamma-r", type=float, default=None,
                   help="denoising strength for refinement views")
    g.add_argument("--refine-views", type=int, default=None,
                   help="max refinement views (0..36)")
    g.add_argument("--steps", type=int, default=None, help="sampler steps per view")
    g.add_argument("--config", default=None, help="TOML or JSON config file")
    g.add_argument("--debug-dumps", action="store_true",
                   help="write per-view depth/similarity/mask/init/output PNGs")
    g.add_argument("--disable-partition", action="store_true",
                   help="ablation: treat every foreground pixel as New")
    g.add_argument("--disable-update", action="store_true",
                   help="ablation: never relabel painted pixels as Update")
    g.add_argument("--deterministic", action="store_true",
                   help="require an explicit seed")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("turntable", help="render frames of an exported model")
    t.add_argument("--model", required=True, help="model.obj from generate")
    t.add_argument("--texture", default=None, help="texture PNG (default: from MTL)")
    t.add_argument("--out", default="turntable", help="output directory")
    t.add_argument("--frames", type=int, default=12)
    t.add_argument("--elevation", type=float, default=15.0)
    t.add_argument("--distance", type=float, default=1.8)
    t.add_argument("--image-res", type=int, default=512)
    t.set_defaults(func=cmd_turntable)

    v = sub.add_parser("validate", help="check a mesh loads, normalizes, bakes")
    v.add_argument("--mesh", required=True)
    v.add_argument("--tex-res", type=int, default=256)
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
