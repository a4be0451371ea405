"""Command-line entry point: bind the service and block until interrupted."""

from __future__ import annotations

import argparse
import sys

from model_gateway.service import GatewayConfig, GatewayError, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-gateway",
        description="Serve the generative-model wire protocol over HTTP.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080, help="0 binds an ephemeral port")
    parser.add_argument("--mode", choices=["stub", "models"], default="stub")
    args = parser.parse_args(argv)

    try:
        config = GatewayConfig(port=args.port, host=args.host, mode=args.mode)
        service = serve(config)
    except GatewayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"listening on {service.base_url} ({config.mode} mode)", flush=True)
    try:
        service.thread.join()
    except KeyboardInterrupt:
        service.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
