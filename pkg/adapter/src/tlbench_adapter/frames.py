"""Reading the video inputs the protocol points us at.

Two forms are accepted, matching what the evaluation side produces for
fixtures and curation output: a binary frame payload (16-byte header of
height, width, channels and frame count as big-endian u32, then raw
row-major uint8 pixels) or a directory of numbered image files.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct(">IIII")
_NUMBER = re.compile(r"(\d+)")
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


class VideoReadError(RuntimeError):
    """The video path is missing, truncated, or not a known format."""


def read_payload(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise VideoReadError(f"{path}: too short for a frame payload header")
    height, width, channels, frame_count = _HEADER.unpack_from(blob)
    body = blob[_HEADER.size :]
    expected = frame_count * height * width * channels
    if len(body) != expected:
        raise VideoReadError(
            f"{path}: payload carries {len(body)} pixel bytes, header says {expected}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(
        frame_count, height, width, channels
    )


def read_image_dir(path: Path) -> np.ndarray:
    from PIL import Image

    numbered = []
    for p in path.iterdir():
        if p.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        match = _NUMBER.search(p.stem)
        if match is None:
            raise VideoReadError(f"{p.name}: image file carries no frame number")
        numbered.append((int(match.group(1)), p))
    if not numbered:
        raise VideoReadError(f"{path}: no image files")
    numbered.sort()
    frames = []
    for _, p in numbered:
        with Image.open(p) as img:
            arr = np.asarray(img.convert("RGB" if img.mode != "L" else "L"))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        frames.append(arr)
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise VideoReadError(f"{path}: images disagree on shape: {sorted(shapes)}")
    return np.stack(frames).astype(np.uint8)


def load_video(path: str | Path) -> np.ndarray:
    """Frames as uint8 with shape (F, H, W, C)."""
    p = Path(path)
    if p.is_dir():
        return read_image_dir(p)
    if p.is_file():
        return read_payload(p)
    raise VideoReadError(f"no video at {path}")


def to_gray(frames: np.ndarray) -> np.ndarray:
    """uint8 single-channel view of the frames, shape (F, H, W)."""
    if frames.shape[-1] == 1:
        return frames[..., 0]
    # Plain channel mean; the trackers and statistics here only need a
    # consistent scalar image, not perceptual luminance.
    return frames.mean(axis=-1).astype(np.uint8)
