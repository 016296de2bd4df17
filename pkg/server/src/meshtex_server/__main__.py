"""Entry point: `python -m meshtex_server` or the meshtex-server script."""
from __future__ import annotations

import logging

import uvicorn

from .app import create_app
from .config import parse_args


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    config = parse_args(argv)
    uvicorn.run(create_app(config), host=config.host, port=config.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
