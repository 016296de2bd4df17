from __future__ import annotations

import json

import numpy as np
import pytest

from meshtex import pngio
from meshtex.cli import (
    atlas_from_png_bytes,
    atlas_to_png_bytes,
    export_textured_obj,
    find_mtl_texture,
    load_config_file,
    main,
)
from meshtex.errors import MeshTexError
from meshtex.geometry import load_mesh, normalize_mesh
from meshtex.texstate import TextureAtlas


def _generate_args(cube_obj, out, extra=()):
    return ["generate", "--mesh", str(cube_obj), "--out", str(out),
            "--prompt", "red", "--image-res", "64", "--tex-res", "128",
            "--refine-views", "0", "--steps", "5", "--seed", "1", *extra]


# --- atlas png round trip ------------------------------------------------------

def test_atlas_png_roundtrip_exact_at_8bit():
    rng = np.random.default_rng(0)
    atlas = TextureAtlas.empty(16)
    atlas.rgb[:] = rng.integers(0, 256, size=(16, 16, 3)) / 255.0
    atlas.painted[:] = True
    back = atlas_from_png_bytes(atlas_to_png_bytes(atlas))
    assert np.array_equal(back.rgb, atlas.rgb)
    assert back.painted.all()


def test_atlas_png_row_order_flipped():
    # texel row 0 (v = 0) must be the bottom row of the PNG
    atlas = TextureAtlas.empty(4)
    atlas.painted[:] = True
    atlas.rgb[0, :, 0] = 1.0  # v=0 row pure red
    u8 = pngio.decode_rgb8_raw(atlas_to_png_bytes(atlas))
    assert (u8[-1, :, 0] == 255).all()
    assert (u8[0, :, 0] == 0).all()


def test_atlas_png_unpainted_fill():
    atlas = TextureAtlas.empty(4)
    atlas.painted[0, 0] = True
    atlas.rgb[0, 0] = (1.0, 0.0, 0.0)
    u8 = pngio.decode_rgb8_raw(atlas_to_png_bytes(atlas, (0.0, 1.0, 0.0)))
    assert list(u8[-1, 0]) == [255, 0, 0]
    assert list(u8[0, 0]) == [0, 255, 0]


def test_atlas_from_png_rejects_non_square():
    from PIL import Image
    import io
    img = Image.new("RGB", (4, 8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    with pytest.raises(MeshTexError):
        atlas_from_png_bytes(buf.getvalue())


# --- obj export ----------------------------------------------------------------

def test_export_reimports_identically(cube_mesh, tmp_path):
    atlas = TextureAtlas.empty(32)
    atlas.painted[:] = True
    atlas.rgb[:] = 0.25
    export_textured_obj(cube_mesh, atlas, str(tmp_path))

    again = load_mesh(str(tmp_path / "model.obj"))
    assert again.num_faces == cube_mesh.num_faces
    assert np.allclose(again.positions, cube_mesh.positions, atol=1e-8)
    assert np.allclose(again.corner_uvs, cube_mesh.corner_uvs, atol=1e-8)

    tex = find_mtl_texture(str(tmp_path / "model.obj"))
    assert tex == str(tmp_path / "texture.png")
    atlas2 = atlas_from_png_bytes(open(tex, "rb").read())
    assert np.allclose(atlas2.rgb, 64 / 255.0)


def test_find_mtl_texture_missing(tmp_path):
    obj = tmp_path / "bare.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1\n")
    assert find_mtl_texture(str(obj)) is None


# --- config files ----------------------------------------------------------

def test_load_config_toml(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text('prompt = "blue"\nseed = 9\ngamma_g = 0.4\n')
    cfg = load_config_file(str(p))
    assert cfg == {"prompt": "blue", "seed": 9, "gamma_g": 0.4}


def test_load_config_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text('{"prompt": "blue", "steps": 4}')
    assert load_config_file(str(p)) == {"prompt": "blue", "steps": 4}


# --- generate ------------------------------------------------------------------

def test_generate_writes_outputs(cube_obj, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(_generate_args(cube_obj, out))
    assert rc == 0
    for name in ("texture.png", "model.obj", "model.mtl", "report.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok"
    assert report["total_views"] == 6
    assert report["final_coverage"] > 0.95
    assert "coverage" in capsys.readouterr().out


def test_generate_failure_leaves_report(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["generate", "--mesh", str(tmp_path / "missing.obj"),
               "--out", str(out), "--prompt", "x"])
    assert rc == 1
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "error"
    assert "missing.obj" in report["error"]
    assert report["records"] == []
    assert "error" in capsys.readouterr().err


def test_generate_config_file_and_flag_precedence(cube_obj, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('prompt = "green"\nseed = 3\nsteps = 5\n'
                   'image_resolution = 64\ntexture_resolution = 128\n'
                   'n_refine_select = 0\n')
    out = tmp_path / "run"
    rc = main(["generate", "--mesh", str(cube_obj), "--out", str(out),
               "--config", str(cfg), "--prompt", "red"])  # flag wins
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["prompt"] == "red"
    assert report["config"]["seed"] == 3
    assert report["config"]["steps"] == 5


def test_generate_rejects_unknown_config_key(cube_obj, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('promt = "oops"\n')
    out = tmp_path / "run"
    rc = main(["generate", "--mesh", str(cube_obj), "--out", str(out),
               "--config", str(cfg)])
    assert rc == 1
    report = json.loads((out / "report.json").read_text())
    assert "promt" in report["error"]


def test_generate_deterministic_needs_seed(cube_obj, tmp_path):
    out = tmp_path / "run"
    rc = main(["generate", "--mesh", str(cube_obj), "--out", str(out),
               "--prompt", "x", "--deterministic"])
    assert rc == 1
    report = json.loads((out / "report.json").read_text())
    assert "seed" in report["error"]


def test_generate_deterministic_with_seed_reproduces(cube_obj, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(_generate_args(cube_obj, out_a, ("--deterministic",))) == 0
    assert main(_generate_args(cube_obj, out_b, ("--deterministic",))) == 0
    a = (out_a / "texture.png").read_bytes()
    b = (out_b / "texture.png").read_bytes()
    assert a == b


def test_generate_debug_dumps(cube_obj, tmp_path):
    out = tmp_path / "run"
    rc = main(_generate_args(cube_obj, out, ("--debug-dumps",)))
    assert rc == 0
    dumps = list((out / "debug").glob("*.png"))
    assert len(dumps) == 30  # six views, five planes each


def test_generate_weights_from_config(cube_obj, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "weights": {"new": 1.0, "update": 0.5, "keep": 0.1},
        "steps": 5, "image_resolution": 64, "texture_resolution": 128,
        "n_refine_select": 0, "prompt": "red", "seed": 0,
    }))
    out = tmp_path / "run"
    rc = main(["generate", "--mesh", str(cube_obj), "--out", str(out),
               "--config", str(cfg)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["weights"] == {"new": 1.0, "update": 0.5, "keep": 0.1}


# --- turntable -------------------------------------------------------------

def test_turntable_renders_frames(cube_obj, tmp_path):
    run = tmp_path / "run"
    assert main(_generate_args(cube_obj, run)) == 0
    frames = tmp_path / "frames"
    rc = main(["turntable", "--model", str(run / "model.obj"),
               "--out", str(frames), "--frames", "4", "--image-res", "48"])
    assert rc == 0
    files = sorted(p.name for p in frames.iterdir())
    assert files == [f"frame_{k:03d}.png" for k in range(4)]
    # frames contain the mesh (not all background)
    first = pngio.decode_rgb8_raw((frames / "frame_000.png").read_bytes())
    assert len(np.unique(first.reshape(-1, 3), axis=0)) > 1


def test_turntable_needs_texture(cube_obj, tmp_path, capsys):
    rc = main(["turntable", "--model", str(cube_obj), "--out",
               str(tmp_path / "f")])
    assert rc == 1
    assert "texture" in capsys.readouterr().err


def test_turntable_explicit_texture(cube_obj, tmp_path):
    run = tmp_path / "run"
    assert main(_generate_args(cube_obj, run)) == 0
    frames = tmp_path / "frames"
    rc = main(["turntable", "--model", str(cube_obj),
               "--texture", str(run / "texture.png"),
               "--out", str(frames), "--frames", "1", "--image-res", "32"])
    assert rc == 0
    assert (frames / "frame_000.png").exists()


# --- validate --------------------------------------------------------------

def test_validate_good_mesh(cube_obj, capsys):
    rc = main(["validate", "--mesh", str(cube_obj), "--tex-res", "64"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "12 triangles" in out
    assert "ok" in out


def test_validate_bad_mesh(tmp_path, capsys):
    import meshes
    bad = tmp_path / "quad.obj"
    bad.write_text(meshes.quad_obj_text())
    rc = main(["validate", "--mesh", str(bad)])
    assert rc == 1
    assert "invalid" in capsys.readouterr().err
