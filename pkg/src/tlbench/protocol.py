"""Wire contract between the toolkit and a model-hosting adapter.

Four request kinds cover everything the metrics need from neural models:
``track`` (point visibility matrices), ``retrieve`` (probabilities against
the ten canonical sentences), ``caption`` (per-frame captions or a summary
over captions) and ``rubric`` (the 5-point change grade).

Transport is deliberately boring: one JSON object per message, prefixed by
a 4-byte big-endian length, over a subprocess's stdio or an HTTP POST. JSON
is serialized canonically (sorted keys, no whitespace) so byte-level
transcripts are reproducible. Requests carry checksums of the canonical
sentence and rubric texts; an adapter holding different bytes must refuse
rather than quietly compute a different metric.

Every read carries a deadline. Responses are matched to requests by id, and
any disagreement is a protocol error, not a warning.
"""

from __future__ import annotations

import json
import os
import select
import socket
import struct
import subprocess
import threading
import time
import urllib.error
import urllib.request
import uuid
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Mapping, Sequence

from .types import (
    RetrievalProfile,
    ValidationError,
    VisibilityMatrix,
    parse_retrieval_profile,
    validate_visibility,
)

REQUEST_KINDS = ("track", "retrieve", "caption", "rubric")

_LENGTH_PREFIX = struct.Struct(">I")
_MAX_FRAME_BYTES = 512 * 1024 * 1024
_CHECKSUM_HEX = 64


class ProtocolError(RuntimeError):
    """Transport-level violation: framing, ids, or a vanished peer."""


class SchemaError(ProtocolError):
    """A message parsed as JSON but does not fit its schema."""


class ProtocolTimeoutError(ProtocolError):
    """The deadline passed before a complete response arrived."""


class BackendError(ProtocolError):
    """The adapter answered status=error."""


class ChecksumMismatchError(BackendError):
    """Adapter and core disagree on the canonical sentence or rubric bytes."""


def canonical_json(obj: Any) -> bytes:
    """Stable byte serialization: sorted keys, minimal separators, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_frame(obj: Any) -> bytes:
    body = canonical_json(obj)
    return _LENGTH_PREFIX.pack(len(body)) + body


def decode_frame(blob: bytes) -> Any:
    """Inverse of encode_frame for already-buffered bytes."""
    if len(blob) < _LENGTH_PREFIX.size:
        raise ProtocolError("frame shorter than its length prefix")
    (length,) = _LENGTH_PREFIX.unpack_from(blob)
    body = blob[_LENGTH_PREFIX.size :]
    if len(body) != length:
        raise ProtocolError(f"frame length {len(body)} != declared {length}")
    return _parse_json(body)


def _parse_json(body: bytes) -> Any:
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}") from exc


def write_frame(stream: BinaryIO, obj: Any) -> None:
    stream.write(encode_frame(obj))
    stream.flush()


def read_frame(stream: BinaryIO, deadline: float | None = None) -> Any:
    """Read one length-prefixed JSON message, honoring an absolute deadline.

    The deadline is a time.monotonic() instant; None blocks forever (only
    sensible for adapter-side loops whose lifetime the caller owns).
    """
    header = _read_exact(stream, _LENGTH_PREFIX.size, deadline)
    (length,) = _LENGTH_PREFIX.unpack(header)
    if length > _MAX_FRAME_BYTES:
        raise ProtocolError(f"declared frame length {length} is implausible")
    return _parse_json(_read_exact(stream, length, deadline))


def _read_exact(stream: BinaryIO, count: int, deadline: float | None) -> bytes:
    fd = stream.fileno()
    chunks = []
    remaining = count
    while remaining > 0:
        if deadline is not None:
            budget = deadline - time.monotonic()
            if budget <= 0:
                raise ProtocolTimeoutError("deadline passed while reading a frame")
            ready, _, _ = select.select([fd], [], [], budget)
            if not ready:
                raise ProtocolTimeoutError("deadline passed while reading a frame")
        chunk = os.read(fd, remaining)
        if not chunk:
            raise ProtocolError("peer closed the stream mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


@dataclass(frozen=True)
class BackendRequest:
    kind: str
    payload: dict
    request_id: str

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "payload": self.payload,
            "request_id": self.request_id,
        }


@dataclass(frozen=True)
class BackendResponse:
    request_id: str
    status: str
    body: Any = None
    error_message: str | None = None

    def as_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "status": self.status,
            "body": self.body,
            "error_message": self.error_message,
        }


def _new_request_id() -> str:
    return uuid.uuid4().hex


def _require_str(payload: Mapping, key: str, where: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{where} needs a nonempty string '{key}'")
    return value


def _require_checksum(payload: Mapping, key: str, where: str) -> str:
    value = _require_str(payload, key, where)
    if len(value) != _CHECKSUM_HEX or any(c not in "0123456789abcdef" for c in value):
        raise SchemaError(f"{where} field '{key}' must be a sha256 hex digest")
    return value


def _require_int(value: Any, what: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{what} must be an integer")
    if value < minimum:
        raise SchemaError(f"{what} must be >= {minimum}")
    return value


def _validate_payload(kind: str, payload: Any) -> dict:
    if not isinstance(payload, Mapping):
        raise SchemaError("payload must be an object")
    if kind == "track":
        video = _require_str(payload, "video", "track payload")
        grid = _require_int(payload.get("grid_size"), "track grid_size", 2)
        return {"video": video, "grid_size": grid}
    if kind == "retrieve":
        return {
            "video": _require_str(payload, "video", "retrieve payload"),
            "sentences_checksum": _require_checksum(
                payload, "sentences_checksum", "retrieve payload"
            ),
        }
    if kind == "caption":
        if "summarize" in payload:
            pairs = payload["summarize"]
            if not isinstance(pairs, list) or not pairs:
                raise SchemaError("summarize payload needs a nonempty pair list")
            cleaned = []
            for pair in pairs:
                if not isinstance(pair, Mapping):
                    raise SchemaError("summarize pairs must be objects")
                position = _require_int(pair.get("position"), "pair position", 0)
                caption = _require_str(pair, "caption", "summarize pair")
                cleaned.append({"position": position, "caption": caption})
            return {"summarize": cleaned}
        return {
            "video": _require_str(payload, "video", "caption payload"),
            "frame_index": _require_int(
                payload.get("frame_index"), "caption frame_index", 0
            ),
        }
    if kind == "rubric":
        indices = payload.get("frame_indices")
        if not isinstance(indices, list) or not indices:
            raise SchemaError("rubric payload needs a nonempty frame_indices list")
        return {
            "video": _require_str(payload, "video", "rubric payload"),
            "frame_indices": [
                _require_int(i, "rubric frame index", 0) for i in indices
            ],
            "rubric_checksum": _require_checksum(
                payload, "rubric_checksum", "rubric payload"
            ),
        }
    raise SchemaError(f"unknown request kind {kind!r}")


def validate_request(raw: Any) -> BackendRequest:
    if not isinstance(raw, Mapping):
        raise SchemaError("request must be a JSON object")
    kind = raw.get("kind")
    if kind not in REQUEST_KINDS:
        raise SchemaError(f"unknown request kind {kind!r}")
    request_id = raw.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise SchemaError("request_id must be a nonempty string")
    return BackendRequest(
        kind=kind,
        payload=_validate_payload(kind, raw.get("payload")),
        request_id=request_id,
    )


def validate_response(raw: Any, kind: str) -> BackendResponse:
    """Shape-check a response for a request of the given kind."""
    if not isinstance(raw, Mapping):
        raise SchemaError("response must be a JSON object")
    request_id = raw.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise SchemaError("response request_id must be a nonempty string")
    status = raw.get("status")
    if status not in ("ok", "error"):
        raise SchemaError(f"response status {status!r} is not ok|error")
    if status == "error":
        message = raw.get("error_message")
        if not isinstance(message, str) or not message:
            raise SchemaError("error responses must carry an error_message")
        return BackendResponse(
            request_id=request_id, status="error", error_message=message
        )
    body = raw.get("body")
    if kind == "track":
        try:
            validate_visibility(body)
        except ValidationError as exc:
            raise SchemaError(f"track body invalid: {exc}") from exc
    elif kind == "retrieve":
        try:
            parse_retrieval_profile(body)
        except ValidationError as exc:
            raise SchemaError(f"retrieve body invalid: {exc}") from exc
    elif kind in ("caption", "rubric"):
        if not isinstance(body, Mapping) or not isinstance(body.get("text"), str):
            raise SchemaError(f"{kind} body needs a 'text' string")
        if not body["text"]:
            raise SchemaError(f"{kind} body text is empty")
    return BackendResponse(request_id=request_id, status="ok", body=body)


def track_request(
    video: str, grid_size: int, request_id: str | None = None
) -> BackendRequest:
    return validate_request(
        {
            "kind": "track",
            "payload": {"video": video, "grid_size": grid_size},
            "request_id": request_id or _new_request_id(),
        }
    )


def retrieve_request(
    video: str, sentences_checksum: str, request_id: str | None = None
) -> BackendRequest:
    return validate_request(
        {
            "kind": "retrieve",
            "payload": {"video": video, "sentences_checksum": sentences_checksum},
            "request_id": request_id or _new_request_id(),
        }
    )


def caption_request(
    video: str, frame_index: int, request_id: str | None = None
) -> BackendRequest:
    return validate_request(
        {
            "kind": "caption",
            "payload": {"video": video, "frame_index": frame_index},
            "request_id": request_id or _new_request_id(),
        }
    )


def summarize_request(
    pairs: Sequence[tuple[int, str]], request_id: str | None = None
) -> BackendRequest:
    return validate_request(
        {
            "kind": "caption",
            "payload": {
                "summarize": [
                    {"position": position, "caption": caption}
                    for position, caption in pairs
                ]
            },
            "request_id": request_id or _new_request_id(),
        }
    )


def rubric_request(
    video: str,
    frame_indices: Sequence[int],
    rubric_checksum: str,
    request_id: str | None = None,
) -> BackendRequest:
    return validate_request(
        {
            "kind": "rubric",
            "payload": {
                "video": video,
                "frame_indices": list(frame_indices),
                "rubric_checksum": rubric_checksum,
            },
            "request_id": request_id or _new_request_id(),
        }
    )


def ok_response(request_id: str, body: Any) -> BackendResponse:
    return BackendResponse(request_id=request_id, status="ok", body=body)


def error_response(request_id: str, message: str) -> BackendResponse:
    return BackendResponse(
        request_id=request_id, status="error", error_message=message
    )


class StdioEndpoint:
    """Adapter spawned as a subprocess, spoken to over its stdio.

    The pipe pair carries one conversation, so calls are serialized with a
    lock; parallelism across videos comes from running several endpoints.
    """

    def __init__(self, argv: Sequence[str], timeout: float = 30.0):
        if timeout <= 0:
            raise ValidationError("timeout must be positive")
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )

    def roundtrip_raw(self, message: dict, timeout: float | None = None) -> Any:
        budget = self.timeout if timeout is None else timeout
        with self._lock:
            if self._proc.poll() is not None:
                raise ProtocolError("backend subprocess has exited")
            deadline = time.monotonic() + budget
            try:
                write_frame(self._proc.stdin, message)
            except (BrokenPipeError, OSError) as exc:
                raise ProtocolError(f"backend pipe closed: {exc}") from exc
            return read_frame(self._proc.stdout, deadline)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream is not None:
                stream.close()

    def __enter__(self) -> "StdioEndpoint":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class HttpEndpoint:
    """Adapter behind an HTTP server; each request is one POST."""

    def __init__(
        self, url: str, timeout: float = 30.0, bearer_token: str | None = None
    ):
        if timeout <= 0:
            raise ValidationError("timeout must be positive")
        self.url = url
        self.timeout = timeout
        self.bearer_token = bearer_token

    def roundtrip_raw(self, message: dict, timeout: float | None = None) -> Any:
        budget = self.timeout if timeout is None else timeout
        headers = {"Content-Type": "application/json"}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        req = urllib.request.Request(
            self.url, data=canonical_json(message), headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=budget) as resp:
                if resp.status != 200:
                    raise ProtocolError(f"backend answered HTTP {resp.status}")
                return _parse_json(resp.read())
        except socket.timeout as exc:
            raise ProtocolTimeoutError("HTTP request timed out") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, socket.timeout):
                raise ProtocolTimeoutError("HTTP request timed out") from exc
            raise ProtocolError(f"HTTP transport failed: {exc.reason}") from exc

    def close(self) -> None:
        pass

    def __enter__(self) -> "HttpEndpoint":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def roundtrip(
    request: BackendRequest, endpoint, timeout: float | None = None
) -> BackendResponse:
    """Send one request, wait for its answer, and vet it.

    Returns only schema-valid ok responses. Error responses become typed
    exceptions; a checksum complaint gets its own type since it means the
    two sides are computing different metrics.
    """
    raw = endpoint.roundtrip_raw(request.as_dict(), timeout=timeout)
    response = validate_response(raw, request.kind)
    if response.request_id != request.request_id:
        raise ProtocolError(
            f"response id {response.request_id!r} does not match "
            f"request id {request.request_id!r}"
        )
    if response.status == "error":
        message = response.error_message or "backend error"
        if "checksum mismatch" in message:
            raise ChecksumMismatchError(message)
        raise BackendError(message)
    return response


@dataclass
class BackendClient:
    """Typed convenience layer over roundtrip for the four request kinds."""

    endpoint: Any
    sentences_checksum: str
    rubric_checksum: str
    timeout: float | None = None

    def track(self, video: str, grid_size: int) -> VisibilityMatrix:
        response = roundtrip(
            track_request(video, grid_size), self.endpoint, timeout=self.timeout
        )
        return validate_visibility(response.body)

    def retrieve(self, video: str) -> RetrievalProfile:
        response = roundtrip(
            retrieve_request(video, self.sentences_checksum),
            self.endpoint,
            timeout=self.timeout,
        )
        return parse_retrieval_profile(response.body)

    def caption(self, video: str, frame_index: int) -> str:
        response = roundtrip(
            caption_request(video, frame_index), self.endpoint, timeout=self.timeout
        )
        return response.body["text"]

    def summarize(self, pairs: Sequence[tuple[int, str]]) -> str:
        response = roundtrip(
            summarize_request(pairs), self.endpoint, timeout=self.timeout
        )
        return response.body["text"]

    def rubric_reply(self, video: str, frame_indices: Sequence[int]) -> str:
        response = roundtrip(
            rubric_request(video, frame_indices, self.rubric_checksum),
            self.endpoint,
            timeout=self.timeout,
        )
        return response.body["text"]
