"""Command line entry point: ``tagshim`` or ``python -m tagshim``."""

import argparse
import sys

from .server import ShimConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagshim",
        description=(
            "serve audio tag scores over stdin/stdout using newline-"
            "delimited JSON; runs until stdin closes"
        ),
    )
    parser.add_argument(
        "--mode",
        choices=("rule-based", "external-model"),
        default="rule-based",
        help="rule-based heuristics or the user-supplied model adapter",
    )
    parser.add_argument(
        "--rate", type=int, default=8000,
        help="sample rate declared in the handshake (default 8000)",
    )
    parser.add_argument(
        "--length", type=int, default=8000,
        help="samples required per request (default 8000)",
    )
    parser.add_argument(
        "--tags",
        help="comma-separated tag list; required with --mode external-model",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    mode = args.mode.replace("-", "_")
    if mode == "rule_based":
        if args.tags is not None:
            parser.error("--tags cannot be used with --mode rule-based")
        tags = None
    else:
        tags = tuple(t.strip() for t in (args.tags or "").split(",") if t.strip())
        if not tags:
            parser.error("--tags is required with --mode external-model")
    try:
        config = ShimConfig(
            mode=mode,
            input_rate=args.rate,
            input_length=args.length,
            tags=tags,
        )
    except ValueError as exc:
        parser.error(str(exc))
    serve(config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
