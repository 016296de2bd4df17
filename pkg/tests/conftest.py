from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `import meshes`

import meshes  # noqa: E402

from meshtex.geometry import load_mesh, normalize_mesh  # noqa: E402


def _write(tmp_path_factory, name: str, text: str) -> Path:
    path = tmp_path_factory.mktemp("meshes") / name
    path.write_text(text)
    return path


@pytest.fixture(scope="session")
def cube_obj(tmp_path_factory) -> Path:
    return _write(tmp_path_factory, "cube.obj", meshes.cube_obj_text())


@pytest.fixture(scope="session")
def icosphere_obj(tmp_path_factory) -> Path:
    return _write(tmp_path_factory, "icosphere.obj", meshes.icosphere_obj_text(2))


@pytest.fixture(scope="session")
def two_boxes_obj(tmp_path_factory) -> Path:
    return _write(tmp_path_factory, "two_boxes.obj", meshes.two_boxes_obj_text())


@pytest.fixture(scope="session")
def cube_mesh(cube_obj):
    return normalize_mesh(load_mesh(str(cube_obj)))


@pytest.fixture(scope="session")
def icosphere_mesh(icosphere_obj):
    return normalize_mesh(load_mesh(str(icosphere_obj)))


@pytest.fixture(scope="session")
def two_boxes_mesh(two_boxes_obj):
    return normalize_mesh(load_mesh(str(two_boxes_obj)))
