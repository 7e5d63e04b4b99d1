"""Deterministic in-package adapter for tests and dry runs.

Speaks the full wire protocol but answers from fixed rules instead of
models: tracking reports every point visible, retrieval returns one fixed
metamorphic-leaning profile, captions echo their frame index, and the
rubric grade is always "3". Useful for exercising plumbing end to end
without network access or model weights, and as the reference peer for the
golden wire transcripts.

Run as ``python -m tlbench.stub_backend``. The --delay and --misbehave
flags exist so tests can provoke timeouts and protocol violations.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .mtscore import CANONICAL_RUBRIC, CANONICAL_SENTENCES
from .protocol import (
    ProtocolError,
    SchemaError,
    error_response,
    ok_response,
    read_frame,
    validate_request,
    write_frame,
)
from .types import VisibilityMatrix, visibility_payload

STUB_TRACK_FRAMES = 2
STUB_PROFILE = [0.05] * 5 + [0.15] * 5  # general five then metamorphic five
STUB_RUBRIC_REPLY = "3"


def _track_body(grid_size: int) -> dict:
    vis = VisibilityMatrix(
        vis=np.ones((STUB_TRACK_FRAMES, grid_size * grid_size), dtype=bool),
        grid_size=grid_size,
    )
    return visibility_payload(vis)


def handle_request(raw: object) -> dict:
    """Map one request object to its response object, never raising."""
    request_id = "unknown"
    if isinstance(raw, dict) and isinstance(raw.get("request_id"), str):
        request_id = raw["request_id"] or "unknown"
    try:
        request = validate_request(raw)
    except SchemaError as exc:
        return error_response(request_id, f"schema violation: {exc}").as_dict()

    payload = request.payload
    if request.kind == "track":
        body = _track_body(payload["grid_size"])
    elif request.kind == "retrieve":
        ours = CANONICAL_SENTENCES.checksum()
        if payload["sentences_checksum"] != ours:
            return error_response(
                request.request_id,
                f"checksum mismatch: sentences here hash to {ours}",
            ).as_dict()
        body = {"sentence_probs": list(STUB_PROFILE)}
    elif request.kind == "caption":
        if "summarize" in payload:
            parts = [
                f"{pair['position']}: {pair['caption']}"
                for pair in payload["summarize"]
            ]
            body = {"text": "stub summary of " + "; ".join(parts)}
        else:
            body = {
                "text": f"stub caption for frame {payload['frame_index']} "
                f"of {payload['video']}"
            }
    else:  # rubric
        ours = CANONICAL_RUBRIC.checksum()
        if payload["rubric_checksum"] != ours:
            return error_response(
                request.request_id,
                f"checksum mismatch: rubric here hashes to {ours}",
            ).as_dict()
        body = {"text": STUB_RUBRIC_REPLY}
    return ok_response(request.request_id, body).as_dict()


def serve(stdin=None, stdout=None, delay: float = 0.0, misbehave: str = "none") -> None:
    """Answer requests until the peer closes the pipe."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    while True:
        try:
            raw = read_frame(stdin)
        except ProtocolError:
            return
        if delay > 0:
            time.sleep(delay)
        if misbehave == "close":
            return
        if misbehave == "garbage":
            stdout.write(b"\x00\x00\x00\x08not json")
            stdout.flush()
            continue
        response = handle_request(raw)
        if misbehave == "wrong-id":
            response["request_id"] = "bogus-id"
        write_frame(stdout, response)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tlbench-stub-backend", description=__doc__
    )
    parser.add_argument(
        "--delay", type=float, default=0.0, help="seconds to sleep before each reply"
    )
    parser.add_argument(
        "--misbehave",
        choices=("none", "wrong-id", "garbage", "close"),
        default="none",
        help="protocol fault to inject, for tests",
    )
    args = parser.parse_args(argv)
    serve(delay=args.delay, misbehave=args.misbehave)
    return 0


if __name__ == "__main__":
    sys.exit(main())
