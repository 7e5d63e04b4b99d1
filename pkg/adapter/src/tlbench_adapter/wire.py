"""Server-side implementation of the evaluation core's wire protocol.

One JSON object per message, prefixed with a 4-byte big-endian length.
JSON is serialized canonically (sorted keys, compact separators) so that
recorded exchanges stay byte-stable. This module is written against the
published protocol description, not against the core's code: the whole
point of the adapter is that the two sides meet only on the wire.

Request kinds and payloads:
  track    {video, grid_size}
  retrieve {video, sentences_checksum}
  caption  {video, frame_index} or {summarize: [{position, caption}, ...]}
  rubric   {video, frame_indices, rubric_checksum}

Responses: {request_id, status: "ok"|"error", body, error_message}.
"""

from __future__ import annotations

import json
import struct
from typing import Any, BinaryIO, Mapping

KINDS = ("track", "retrieve", "caption", "rubric")

_PREFIX = struct.Struct(">I")
_MAX_FRAME = 512 * 1024 * 1024


class WireError(RuntimeError):
    """Framing failure or a message that does not fit its schema."""


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_frame(stream: BinaryIO, obj: Any) -> None:
    body = canonical_json(obj)
    stream.write(_PREFIX.pack(len(body)) + body)
    stream.flush()


def read_frame(stream: BinaryIO) -> Any | None:
    """One message from the stream, or None at a clean end of input."""
    header = stream.read(_PREFIX.size)
    if not header:
        return None
    if len(header) < _PREFIX.size:
        raise WireError("stream ended inside a length prefix")
    (length,) = _PREFIX.unpack(header)
    if length > _MAX_FRAME:
        raise WireError(f"declared frame length {length} is implausible")
    body = stream.read(length)
    if len(body) < length:
        raise WireError("stream ended inside a frame body")
    return parse_json(body)


def parse_json(body: bytes) -> Any:
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"frame is not valid JSON: {exc}") from exc


def _str_field(payload: Mapping, key: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str) or not value:
        raise WireError(f"payload needs a nonempty string '{key}'")
    return value


def _int_field(value: Any, what: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise WireError(f"{what} must be an integer")
    if value < minimum:
        raise WireError(f"{what} must be >= {minimum}")
    return value


def _checksum_field(payload: Mapping, key: str) -> str:
    value = _str_field(payload, key)
    if len(value) != 64 or any(c not in "0123456789abcdef" for c in value):
        raise WireError(f"'{key}' must be a sha256 hex digest")
    return value


def parse_request(raw: Any) -> tuple[str, dict, str]:
    """Validate one incoming request; returns (kind, payload, request_id)."""
    if not isinstance(raw, Mapping):
        raise WireError("request must be a JSON object")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise WireError(f"unknown request kind {kind!r}")
    request_id = raw.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise WireError("request_id must be a nonempty string")
    payload = raw.get("payload")
    if not isinstance(payload, Mapping):
        raise WireError("payload must be an object")

    if kind == "track":
        clean = {
            "video": _str_field(payload, "video"),
            "grid_size": _int_field(payload.get("grid_size"), "grid_size", 2),
        }
    elif kind == "retrieve":
        clean = {
            "video": _str_field(payload, "video"),
            "sentences_checksum": _checksum_field(payload, "sentences_checksum"),
        }
    elif kind == "caption":
        if "summarize" in payload:
            pairs = payload["summarize"]
            if not isinstance(pairs, list) or not pairs:
                raise WireError("summarize needs a nonempty pair list")
            cleaned_pairs = []
            for pair in pairs:
                if not isinstance(pair, Mapping):
                    raise WireError("summarize pairs must be objects")
                cleaned_pairs.append(
                    {
                        "position": _int_field(pair.get("position"), "position", 0),
                        "caption": _str_field(pair, "caption"),
                    }
                )
            clean = {"summarize": cleaned_pairs}
        else:
            clean = {
                "video": _str_field(payload, "video"),
                "frame_index": _int_field(payload.get("frame_index"), "frame_index", 0),
            }
    else:  # rubric
        indices = payload.get("frame_indices")
        if not isinstance(indices, list) or not indices:
            raise WireError("rubric needs a nonempty frame_indices list")
        clean = {
            "video": _str_field(payload, "video"),
            "frame_indices": [_int_field(i, "frame index", 0) for i in indices],
            "rubric_checksum": _checksum_field(payload, "rubric_checksum"),
        }
    return kind, clean, request_id


def ok(request_id: str, body: Any) -> dict:
    return {
        "request_id": request_id,
        "status": "ok",
        "body": body,
        "error_message": None,
    }


def error(request_id: str, message: str) -> dict:
    return {
        "request_id": request_id,
        "status": "error",
        "body": None,
        "error_message": message,
    }
