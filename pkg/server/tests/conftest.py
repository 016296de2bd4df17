from __future__ import annotations

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from meshtex_server.app import create_app
from meshtex_server.config import ServerConfig

FIXTURE_DIR = Path(__file__).resolve().parents[2] / "fixtures" / "protocol"


@pytest.fixture(scope="session")
def client() -> TestClient:
    return TestClient(create_app(ServerConfig()))


@pytest.fixture(scope="session")
def golden_requests() -> dict:
    """name -> request payload dict, straight from the frozen files."""
    out = {}
    for name in ("all_keep", "all_new"):
        payload = json.loads((FIXTURE_DIR / f"{name}.json").read_text())
        out[name] = payload["request"]
    return out
