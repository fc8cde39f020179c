"""Run the bridge: `instex-bridge [--port N] [--engine mock|diffusers]`."""

import argparse

from .app import create_app
from .config import BridgeConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="instex-bridge")
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--engine", choices=["mock", "diffusers"], default=None)
    parser.add_argument("--max-jobs", type=int, default=None)
    parser.add_argument("--device", default=None)
    args = parser.parse_args(argv)
    config = BridgeConfig.from_env()
    if args.port is not None:
        config.port = args.port
    if args.engine is not None:
        config.engine = args.engine
    if args.max_jobs is not None:
        config.max_concurrent_jobs = args.max_jobs
    if args.device is not None:
        config.device = args.device

    import uvicorn

    uvicorn.run(create_app(config), host="0.0.0.0", port=config.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
