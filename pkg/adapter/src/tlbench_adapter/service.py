"""Request dispatch and the two serving loops (stdio and HTTP).

One service instance owns one model per request kind. Inference is
serialized behind a lock (the models are not reentrant and the expected
deployment is one device), while the HTTP transport accepts several
connections and bounds how many may wait with a semaphore. The stdio loop
is strictly sequential: answers go out in arrival order, ids echoed back.

A request never crashes the loop: anything that goes wrong inside a
handler becomes a status=error response naming the failure.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import wire
from .canon import rubric_checksum, sentences_checksum, verify_canon
from .frames import VideoReadError, load_video, to_gray
from .models import (
    ChangeRubricGrader,
    InferenceError,
    LucasKanadeTracker,
    MotionRetriever,
    StubCaptioner,
    StubRetriever,
    StubRubricGrader,
    StubTracker,
    TemplateCaptioner,
)

TRACKER_CHOICES = ("lk", "stub")
RETRIEVER_CHOICES = ("motion", "stub")
CAPTIONER_CHOICES = ("template", "stub")
GRADER_CHOICES = ("change", "stub")


class StartupError(RuntimeError):
    """The service refused to start (bad config or unloadable model)."""


@dataclass
class AdapterConfig:
    """Everything the service needs decided before it answers a request."""

    mode: str = "stdio"
    tracker: str = "lk"
    retriever: str = "motion"
    captioner: str = "template"
    grader: str = "change"
    device: str = "cpu"
    batch_size: int = 4096
    vis_threshold: float = 0.5
    fb_max_px: float = 1.0
    temperature: float = 1.0
    stub_rubric_reply: str = "5"
    max_in_flight: int = 4
    sentences_checksum: str = field(default_factory=sentences_checksum)
    rubric_checksum: str = field(default_factory=rubric_checksum)

    def __post_init__(self) -> None:
        verify_canon()
        choices = (
            (self.mode, ("stdio", "http"), "mode"),
            (self.tracker, TRACKER_CHOICES, "tracker"),
            (self.retriever, RETRIEVER_CHOICES, "retriever"),
            (self.captioner, CAPTIONER_CHOICES, "captioner"),
            (self.grader, GRADER_CHOICES, "grader"),
        )
        for value, allowed, what in choices:
            if value not in allowed:
                raise StartupError(f"unknown {what} {value!r}, pick from {allowed}")
        if self.max_in_flight < 1:
            raise StartupError("max_in_flight must be at least 1")
        if self.device != "cpu":
            raise StartupError("only cpu inference is implemented")


class AdapterService:
    """Maps validated requests to model answers."""

    def __init__(self, config: AdapterConfig):
        self.config = config
        self._infer_lock = threading.Lock()
        try:
            if config.tracker == "lk":
                self.tracker = LucasKanadeTracker(
                    vis_threshold=config.vis_threshold,
                    fb_max_px=config.fb_max_px,
                    batch_size=config.batch_size,
                )
            else:
                self.tracker = StubTracker()
            self.retriever = (
                MotionRetriever(temperature=config.temperature)
                if config.retriever == "motion"
                else StubRetriever()
            )
            self.captioner = (
                TemplateCaptioner() if config.captioner == "template" else StubCaptioner()
            )
            self.grader = (
                ChangeRubricGrader()
                if config.grader == "change"
                else StubRubricGrader(reply=config.stub_rubric_reply)
            )
        except InferenceError as exc:
            raise StartupError(str(exc)) from exc
        self._stub_kinds = {
            "track": config.tracker == "stub",
            "retrieve": config.retriever == "stub",
            "caption": config.captioner == "stub",
            "rubric": config.grader == "stub",
        }

    def _frames(self, kind: str, video: str) -> np.ndarray | None:
        # Stubs answer without touching the filesystem, like the ones on
        # the evaluation side, so plumbing tests need no fixture videos.
        if self._stub_kinds[kind]:
            return None
        return load_video(Path(video))

    def handle(self, raw: object) -> dict:
        request_id = "unknown"
        if isinstance(raw, dict) and isinstance(raw.get("request_id"), str):
            request_id = raw["request_id"] or "unknown"
        try:
            kind, payload, request_id = wire.parse_request(raw)
        except wire.WireError as exc:
            return wire.error(request_id, f"schema violation: {exc}")
        try:
            with self._infer_lock:
                body = self._dispatch(kind, payload)
        except (VideoReadError, InferenceError, wire.WireError) as exc:
            return wire.error(request_id, str(exc))
        except Exception as exc:  # last resort: answer, don't die
            return wire.error(request_id, f"internal failure: {exc}")
        return wire.ok(request_id, body)

    def _dispatch(self, kind: str, payload: dict) -> dict:
        if kind == "track":
            frames = self._frames(kind, payload["video"])
            grid_size = payload["grid_size"]
            if frames is None:
                vis = self.tracker.track(None, grid_size)
            else:
                vis = self.tracker.track(to_gray(frames), grid_size)
            return {
                "frames": int(vis.shape[0]),
                "points": int(vis.shape[1]),
                "grid_size": grid_size,
                "vis": [[bool(v) for v in row] for row in vis],
            }
        if kind == "retrieve":
            if payload["sentences_checksum"] != self.config.sentences_checksum:
                raise InferenceError(
                    "checksum mismatch: sentences here hash to "
                    + self.config.sentences_checksum
                )
            frames = self._frames(kind, payload["video"])
            return {"sentence_probs": self.retriever.probabilities(frames)}
        if kind == "caption":
            if "summarize" in payload:
                pairs = [(p["position"], p["caption"]) for p in payload["summarize"]]
                return {"text": self.captioner.summarize(pairs)}
            frames = self._frames(kind, payload["video"])
            return {"text": self.captioner.caption(frames, payload["frame_index"])}
        # rubric
        if payload["rubric_checksum"] != self.config.rubric_checksum:
            raise InferenceError(
                "checksum mismatch: rubric here hashes to "
                + self.config.rubric_checksum
            )
        frames = self._frames(kind, payload["video"])
        indices = payload["frame_indices"]
        if frames is not None:
            bad = [i for i in indices if i >= frames.shape[0]]
            if bad:
                raise InferenceError(
                    f"frame indices {bad} outside a {frames.shape[0]}-frame clip"
                )
        return {"text": self.grader.grade(frames, indices)}


def serve_stdio(service: AdapterService, stdin=None, stdout=None) -> None:
    """Answer frames until the peer closes the pipe."""
    import sys

    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    while True:
        try:
            raw = wire.read_frame(stdin)
        except wire.WireError:
            return
        if raw is None:
            return
        wire.write_frame(stdout, service.handle(raw))


def make_http_server(service: AdapterService, host: str, port: int) -> ThreadingHTTPServer:
    gate = threading.BoundedSemaphore(service.config.max_in_flight)

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            blob = self.rfile.read(length)
            with gate:
                try:
                    raw = wire.parse_json(blob)
                except wire.WireError as exc:
                    response = wire.error("unknown", f"schema violation: {exc}")
                else:
                    response = service.handle(raw)
            body = wire.canonical_json(response)
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


def serve_http(service: AdapterService, host: str, port: int) -> None:
    server = make_http_server(service, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
