"""Start the job service: python -m gradsynth.service [--config FILE] ..."""

import argparse
import os
import sys

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gradsynth-service",
        description="HTTP job service for synthesis tasks.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--host", help="bind address (overrides config)")
    parser.add_argument("--port", type=int, help="bind port (overrides config)")
    args = parser.parse_args(argv)

    from dataclasses import replace

    import uvicorn

    from gradsynth.errors import GradsynthError
    from gradsynth.service.app import create_app
    from gradsynth.service.config import default_config, load_config

    try:
        cfg = load_config(args.config) if args.config else default_config()
    except GradsynthError as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    if args.host:
        cfg = replace(cfg, host=args.host)
    if args.port:
        cfg = replace(cfg, port=args.port)

    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
