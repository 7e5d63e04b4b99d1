"""Turning raw footage into captioned single-scene time-lapse clips.

The pipeline runs in four stages. Hard scene transitions are found by
thresholding the absolute pixel difference between adjacent frames; the
resulting clips are re-joined where a feature embedding says the boundary
frames still show the same scene; clips that vote "general" rather than
"metamorphic" against the canonical retrieval sentences are dropped; the
survivors get a caption assembled from per-frame descriptions.

Pixel differencing sums over channels as well as rows and columns so a pure
hue change still registers; the threshold is expressed per pixel (default 30
intensity levels) which keeps it meaningful across resolutions.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, TypeVar

import numpy as np

from .mtscore import classify_video, sample_frames_uniform
from .types import RetrievalProfile, ValidationError

DEFAULT_TAU_PER_PIXEL = 30.0
DEFAULT_ETA = 0.5

_PAYLOAD_HEADER = struct.Struct(">IIII")  # height, width, channels, frame count


@dataclass(frozen=True)
class FrameSequence:
    """Decoded video frames as one F×H×W×C uint8 array."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames)
        if frames.ndim != 4:
            raise ValidationError("frames must be stacked as F x H x W x C")
        if frames.shape[0] < 1:
            raise ValidationError("need at least one frame")
        if frames.shape[3] not in (1, 3):
            raise ValidationError("channel count must be 1 or 3")
        if not np.issubdtype(frames.dtype, np.integer):
            raise ValidationError("pixel values must be integers")
        if frames.min() < 0 or frames.max() > 255:
            raise ValidationError("pixel values must lie in 0..255")
        frames = frames.astype(np.uint8)
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_list(cls, frames: Sequence[np.ndarray]) -> "FrameSequence":
        if len(frames) == 0:
            raise ValidationError("need at least one frame")
        shapes = {np.asarray(f).shape for f in frames}
        if len(shapes) != 1:
            raise ValidationError("all frames must share height, width and channels")
        return cls(frames=np.stack([np.asarray(f) for f in frames]))

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]

    def clip(self, start: int, end: int) -> "FrameSequence":
        """Sub-sequence over the half-open frame interval [start, end)."""
        if not 0 <= start < end <= self.frame_count:
            raise ValidationError("clip interval out of range")
        return FrameSequence(frames=self.frames[start:end])


@dataclass(frozen=True)
class ClipBoundary:
    """Ordered half-open frame intervals partitioning [0, F)."""

    clips: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.clips:
            raise ValidationError("boundary needs at least one clip")
        clips = tuple((int(s), int(e)) for s, e in self.clips)
        if clips[0][0] != 0:
            raise ValidationError("first clip must start at frame 0")
        for (s, e) in clips:
            if e <= s:
                raise ValidationError("clips must be nonempty")
        for (_, prev_end), (start, _) in zip(clips, clips[1:]):
            if start != prev_end:
                raise ValidationError("clips must tile the frame range without gaps")
        object.__setattr__(self, "clips", clips)

    @property
    def frame_count(self) -> int:
        return self.clips[-1][1]

    def __len__(self) -> int:
        return len(self.clips)


@dataclass(frozen=True)
class ClipFeature:
    """Embedding of one boundary frame of one clip."""

    clip_index: int
    boundary_feature: np.ndarray
    frame_position: str  # "first" or "last"

    def __post_init__(self) -> None:
        if self.frame_position not in ("first", "last"):
            raise ValidationError("frame_position must be 'first' or 'last'")
        if self.clip_index < 0:
            raise ValidationError("clip_index must be non-negative")
        vec = np.asarray(self.boundary_feature, dtype=float)
        if vec.ndim != 1 or vec.size == 0:
            raise ValidationError("boundary feature must be a nonempty vector")
        if not np.isfinite(vec).all():
            raise ValidationError("boundary feature must be finite")
        vec = vec.copy()
        vec.flags.writeable = False
        object.__setattr__(self, "boundary_feature", vec)


def frame_diff_series(seq: FrameSequence) -> np.ndarray:
    """Total absolute pixel change between each pair of adjacent frames."""
    if seq.frame_count < 2:
        raise ValidationError("need at least two frames to difference")
    wide = seq.frames.astype(np.int64)
    return np.abs(wide[1:] - wide[:-1]).sum(axis=(1, 2, 3))


def split_on_transitions(diffs: np.ndarray, tau: float) -> ClipBoundary:
    """Cut between frames t and t+1 wherever diffs[t] exceeds tau.

    ``diffs`` has one entry per adjacent frame pair, so it describes
    ``len(diffs) + 1`` frames.
    """
    if tau <= 0:
        raise ValidationError("tau must be positive")
    diffs = np.asarray(diffs)
    frame_count = diffs.size + 1
    cut_after = np.flatnonzero(diffs > tau)
    starts = [0] + [int(t) + 1 for t in cut_after]
    ends = [int(t) + 1 for t in cut_after] + [frame_count]
    return ClipBoundary(clips=tuple(zip(starts, ends)))


def split_sequence(
    seq: FrameSequence, tau_per_pixel: float = DEFAULT_TAU_PER_PIXEL
) -> ClipBoundary:
    """Split a sequence with the threshold scaled to its pixel count."""
    if seq.frame_count == 1:
        return ClipBoundary(clips=((0, 1),))
    tau = tau_per_pixel * seq.height * seq.width * seq.channels
    return split_on_transitions(frame_diff_series(seq), tau)


def merge_similar_clips(
    boundary: ClipBoundary,
    feats: Sequence[ClipFeature],
    eta: float = DEFAULT_ETA,
) -> ClipBoundary:
    """Re-join adjacent clips whose boundary frames look alike.

    Two neighbours merge when the Euclidean distance between the left clip's
    last-frame embedding and the right clip's first-frame embedding falls
    below eta. Merging sweeps once left to right; after a merge, the merged
    clip answers further comparisons with the right member's last-frame
    embedding.
    """
    if eta <= 0:
        raise ValidationError("eta must be positive")
    table: dict[tuple[int, str], np.ndarray] = {}
    for feat in feats:
        table[(feat.clip_index, feat.frame_position)] = feat.boundary_feature

    def lookup(index: int, position: str) -> np.ndarray:
        key = (index, position)
        if key not in table:
            raise ValidationError(
                f"missing feature for clip {index} ({position} frame)"
            )
        return table[key]

    clips = boundary.clips
    merged: list[tuple[int, int]] = [clips[0]]
    if len(clips) > 1:
        current_last = lookup(0, "last")
    for i, clip in enumerate(clips[1:], start=1):
        distance = float(np.linalg.norm(current_last - lookup(i, "first")))
        if distance < eta:
            start, _ = merged[-1]
            merged[-1] = (start, clip[1])
        else:
            merged.append(clip)
        current_last = lookup(i, "last")
    return ClipBoundary(clips=tuple(merged))


ClipT = TypeVar("ClipT")


def filter_metamorphic(
    clips: Sequence[ClipT], profiles: Sequence[RetrievalProfile]
) -> list[ClipT]:
    """Keep the clips whose retrieval profile votes metamorphic, in order."""
    if len(clips) != len(profiles):
        raise ValidationError("need exactly one retrieval profile per clip")
    return [
        clip
        for clip, profile in zip(clips, profiles)
        if classify_video(profile) == "metamorphic"
    ]


CaptionBackend = Callable[[np.ndarray, int], str]
SummarizeBackend = Callable[[list[tuple[int, str]]], str]


def caption_clip(
    seq: FrameSequence,
    n_frames: int,
    caption_backend: CaptionBackend,
    summarize_backend: SummarizeBackend,
) -> str:
    """Describe a clip by captioning sampled frames and summarizing them.

    The summarizer receives (frame position, caption) pairs so it can keep
    the temporal order of events straight. Backend transport errors
    propagate; an empty caption or summary is rejected here because a blank
    annotation would poison everything downstream.
    """
    indices = sample_frames_uniform(seq.frame_count, n_frames)
    captioned: list[tuple[int, str]] = []
    for index in indices:
        caption = caption_backend(seq.frames[index], index)
        if not caption:
            raise ValidationError(f"empty caption for frame {index}")
        captioned.append((index, caption))
    summary = summarize_backend(captioned)
    if not summary:
        raise ValidationError("empty caption from summarizer")
    return summary


def save_frame_payload(path: str | Path, seq: FrameSequence) -> None:
    """Write frames as a 16-byte header (H, W, C, F as big-endian u32)
    followed by the raw row-major pixel bytes, frame after frame."""
    header = _PAYLOAD_HEADER.pack(
        seq.height, seq.width, seq.channels, seq.frame_count
    )
    Path(path).write_bytes(header + seq.frames.tobytes())


def load_frame_payload(path: str | Path) -> FrameSequence:
    blob = Path(path).read_bytes()
    if len(blob) < _PAYLOAD_HEADER.size:
        raise ValidationError("frame payload too short for its header")
    height, width, channels, frame_count = _PAYLOAD_HEADER.unpack_from(blob)
    expected = frame_count * height * width * channels
    body = blob[_PAYLOAD_HEADER.size :]
    if len(body) != expected:
        raise ValidationError(
            f"frame payload carries {len(body)} bytes, header promises {expected}"
        )
    frames = np.frombuffer(body, dtype=np.uint8).reshape(
        frame_count, height, width, channels
    )
    return FrameSequence(frames=frames)


_FRAME_FILE_RE = re.compile(r"(\d+)")
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def load_frame_dir(path: str | Path) -> FrameSequence:
    """Load a directory of numbered image files as one sequence."""
    from PIL import Image

    files = [
        p
        for p in Path(path).iterdir()
        if p.suffix.lower() in _IMAGE_SUFFIXES
    ]
    if not files:
        raise ValidationError(f"no image files found under {path}")
    numbered = []
    for p in files:
        match = _FRAME_FILE_RE.search(p.stem)
        if match is None:
            raise ValidationError(f"frame file {p.name} carries no frame number")
        numbered.append((int(match.group(1)), p))
    numbered.sort()
    frames = []
    for _, p in numbered:
        with Image.open(p) as img:
            arr = np.asarray(img.convert("RGB" if img.mode != "L" else "L"))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        frames.append(arr)
    return FrameSequence.from_list(frames)


def load_frames(path: str | Path) -> FrameSequence:
    """Dispatch on path type: directory of images or binary payload file."""
    p = Path(path)
    if p.is_dir():
        return load_frame_dir(p)
    if p.is_file():
        return load_frame_payload(p)
    raise ValidationError(f"no frames at {path}")


def peek_frame_count(path: str | Path) -> int:
    """Frame count without decoding pixels: header read or file count."""
    p = Path(path)
    if p.is_dir():
        return sum(1 for f in p.iterdir() if f.suffix.lower() in _IMAGE_SUFFIXES)
    if p.is_file():
        with open(p, "rb") as fh:
            header = fh.read(_PAYLOAD_HEADER.size)
        if len(header) < _PAYLOAD_HEADER.size:
            raise ValidationError("frame payload too short for its header")
        return _PAYLOAD_HEADER.unpack(header)[3]
    raise ValidationError(f"no frames at {path}")
