"""Command-line entry: run the bridge in stdio (default) or HTTP mode."""

from __future__ import annotations

import argparse

from .model import (ColorGateMirror, TemplateMatcher, wrap_user_model,
                    DEFAULT_SECRET_CHROMA, DEFAULT_TOLERANCE)
from .server import serve_http, serve_stdio


def build_verdict_fn(args):
    if args.model == "builtin":
        matcher = None
        if args.gallery:
            matcher = TemplateMatcher.from_directory(args.gallery)
        secret = tuple(float(v) for v in args.secret_chroma.split(","))
        return ColorGateMirror(secret_chroma=secret, tolerance=args.tolerance,
                               matcher=matcher)
    return wrap_user_model(args.model)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oracle-bridge",
        description="Serve an anti-spoofing verdict model over the "
                    "line-delimited JSON protocol.",
    )
    parser.add_argument("--mode", choices=["stdio", "http"], default="stdio")
    parser.add_argument("--port", type=int, default=8901,
                        help="HTTP port (http mode only)")
    parser.add_argument("--model", default="builtin",
                        help="'builtin' for the color-gate mirror, or a path "
                             "to a module exposing verdict(pixels)")
    parser.add_argument("--secret-chroma",
                        default=",".join(str(v) for v in DEFAULT_SECRET_CHROMA))
    parser.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    parser.add_argument("--gallery", default=None,
                        help="directory of 64x64 grayscale identity templates")
    args = parser.parse_args(argv)
    if args.mode == "http" and not 1024 <= args.port <= 65535:
        parser.error("port must be in [1024, 65535]")

    verdict_fn = build_verdict_fn(args)
    if args.mode == "stdio":
        serve_stdio(verdict_fn)
    else:
        serve_http(verdict_fn, args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
