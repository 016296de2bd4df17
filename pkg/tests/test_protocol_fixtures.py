"""The frozen wire-protocol fixtures stay reproducible and self-consistent."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from meshtex.backend import (
    DELTA_B_STEPS,
    GenerateRequest,
    GenerateResponse,
    check_keep_contract,
    local_generate,
)
from meshtex.pngio import decode_mask_png, decode_rgb8, from_b64

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "protocol"


def _load(name: str):
    payload = json.loads((FIXTURE_DIR / name).read_text())
    return (GenerateRequest.from_json(payload["request"]),
            GenerateResponse.from_json(payload["response"]))


@pytest.mark.parametrize("name", ["all_keep.json", "all_new.json"])
def test_fixture_parses_and_resolutions_agree(name):
    request, response = _load(name)
    init = decode_rgb8(from_b64(request.init_image))
    image = decode_rgb8(from_b64(response.image))
    assert init.shape == image.shape == (64, 64, 3)


@pytest.mark.parametrize("name", ["all_keep.json", "all_new.json"])
def test_local_backend_reproduces_frozen_response(name):
    request, response = _load(name)
    fresh = local_generate(request)
    assert np.array_equal(decode_rgb8(from_b64(fresh.image)),
                          decode_rgb8(from_b64(response.image)))
    assert fresh.backend_id == response.backend_id


def test_all_keep_fixture_mask_is_all_keep():
    request, _ = _load("all_keep.json")
    labels = decode_mask_png(from_b64(request.mask))
    assert (labels == 2).all()


def test_all_new_fixture_mask_is_all_new():
    request, _ = _load("all_new.json")
    labels = decode_mask_png(from_b64(request.mask))
    assert (labels == 0).all()


def test_all_keep_fixture_honors_drift_budget():
    request, response = _load("all_keep.json")
    assert check_keep_contract(request, response) == 0
    init = decode_rgb8(from_b64(request.init_image))
    image = decode_rgb8(from_b64(response.image))
    assert np.abs(image - init).max() <= DELTA_B_STEPS / 255.0
