"""The ``adapter`` command.

``adapter serve`` starts answering protocol requests, over stdio (the
default, for subprocess deployment) or HTTP. Model choices and their few
knobs are flags; every kind has a stub variant for tests.
"""

from __future__ import annotations

import argparse
import sys

from .canon import CanonDriftError
from .service import (
    AdapterConfig,
    AdapterService,
    CAPTIONER_CHOICES,
    GRADER_CHOICES,
    RETRIEVER_CHOICES,
    StartupError,
    TRACKER_CHOICES,
    serve_http,
    serve_stdio,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapter", description="Model backend for the tlbench wire protocol."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="answer protocol requests")
    serve.add_argument("--mode", choices=("stdio", "http"), default="stdio")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8787)
    serve.add_argument("--tracker", choices=TRACKER_CHOICES, default="lk")
    serve.add_argument("--retriever", choices=RETRIEVER_CHOICES, default="motion")
    serve.add_argument("--captioner", choices=CAPTIONER_CHOICES, default="template")
    serve.add_argument("--grader", choices=GRADER_CHOICES, default="change")
    serve.add_argument(
        "--vis-threshold",
        type=float,
        default=0.5,
        help="tracker confidence needed to call a point visible",
    )
    serve.add_argument(
        "--fb-max-px",
        type=float,
        default=1.0,
        help="forward-backward tolerance in pixels",
    )
    serve.add_argument(
        "--temperature",
        type=float,
        default=1.0,
        help="retrieval softmax temperature",
    )
    serve.add_argument("--batch-size", type=int, default=4096)
    serve.add_argument("--max-in-flight", type=int, default=4)
    serve.add_argument(
        "--stub-rubric-reply",
        default="5",
        help="what the stub grader answers",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(
            mode=args.mode,
            tracker=args.tracker,
            retriever=args.retriever,
            captioner=args.captioner,
            grader=args.grader,
            batch_size=args.batch_size,
            vis_threshold=args.vis_threshold,
            fb_max_px=args.fb_max_px,
            temperature=args.temperature,
            stub_rubric_reply=args.stub_rubric_reply,
            max_in_flight=args.max_in_flight,
        )
        service = AdapterService(config)
    except (StartupError, CanonDriftError) as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 1
    if config.mode == "stdio":
        serve_stdio(service)
    else:
        serve_http(service, args.host, args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
