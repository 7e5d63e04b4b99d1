"""Metamorphic-amplitude scoring.

Two instruments live here. The coarse score turns a video's retrieval
probabilities against ten canonical sentences into a single share in [0,1]:
how much of the probability mass lands on the time-lapse descriptions. The
fine-grained score asks a multimodal model to grade uniformly sampled frames
against a five-level rubric.

The sentence and rubric texts are canonical constants. Retrieval
probabilities are sensitive to wording, so the texts are frozen byte for
byte and travel as checksums on the wire; see the checksum tests.
"""

from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

from .types import RetrievalProfile, ValidationError

GENERAL_SENTENCES: tuple[str, ...] = (
    "A conventional video, not a time-condensed video.",
    "A usual video, not an accelerated video sequence.",
    "A normal video, not a time-lapse video.",
    "A standard video, not a time-lapse.",
    "An ordinary video, different from a fast-motion video.",
)

METAMORPHIC_SENTENCES: tuple[str, ...] = (
    "A time-lapse video, distinct from a regular recording.",
    "A time-lapse footage, not your typical video.",
    "A fast-motion video, unlike a standard video.",
    "A time-condensed video, not a conventional video.",
    "An accelerated video sequence, not a usual video.",
)

RUBRIC_LEVELS: dict[int, str] = {
    1: (
        "Minimal change. The scene appears almost like a still image, with "
        "static elements remaining motionless and only minor changes in "
        "lighting or subtle movements of elements. No significant activity "
        "is noticeable."
    ),
    2: (
        "Slight change. There is a small amount of movement or change in the "
        "elements of the scene, such as a few people or vehicles moving and "
        "minor changes in light or shadows. The overall variation is still "
        "minimal, with changes mostly being quantitative."
    ),
    3: (
        "Moderate change. Multiple elements in the scene undergo changes, "
        "but the overall pace is slow. This includes gradual changes in "
        "daylight, moving clouds, growing plants, or occasional vehicle and "
        "pedestrian movements. The scene begins to show a transition from "
        "quantitative to qualitative change."
    ),
    4: (
        "Significant change. The elements in the scene show obvious dynamic "
        "changes with a higher speed and frequency of variation. This "
        "includes noticeable changes in city traffic, crowd activities, or "
        "significant weather transitions. The scene displays a mix of "
        "quantitative and qualitative changes."
    ),
    5: (
        "Dramatic change. Elements in the scene undergo continuous and rapid "
        "significant changes, creating a very rich visual effect. This "
        "includes events like sunrise and sunset, construction of buildings, "
        "and seasonal changes, making the variation process vivid and "
        "impactful. The scene exhibits clear qualitative change."
    ),
}


@dataclass(frozen=True)
class RetrievalSentenceSet:
    """The ten retrieval texts, five per video category."""

    general: tuple[str, ...] = GENERAL_SENTENCES
    metamorphic: tuple[str, ...] = METAMORPHIC_SENTENCES

    def __post_init__(self) -> None:
        for group, name in ((self.general, "general"), (self.metamorphic, "metamorphic")):
            if len(group) != 5 or any(not isinstance(s, str) or not s for s in group):
                raise ValidationError(f"{name} group needs exactly 5 nonempty sentences")

    def all_sentences(self) -> tuple[str, ...]:
        """General sentences first, in the canonical wire order."""
        return self.general + self.metamorphic

    def checksum(self) -> str:
        joined = "\n".join(self.all_sentences())
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Rubric:
    """Five scoring criteria keyed by the score they describe."""

    levels: Mapping[int, str] = field(default_factory=lambda: dict(RUBRIC_LEVELS))

    def __post_init__(self) -> None:
        if set(self.levels) != {1, 2, 3, 4, 5}:
            raise ValidationError("rubric levels must be keyed exactly 1..5")
        if any(not isinstance(t, str) or not t for t in self.levels.values()):
            raise ValidationError("rubric levels must be nonempty strings")
        object.__setattr__(self, "levels", dict(self.levels))

    def numbered_lines(self) -> list[str]:
        return [f"{k}. {self.levels[k]}" for k in sorted(self.levels)]

    def checksum(self) -> str:
        joined = "\n".join(self.numbered_lines())
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()


CANONICAL_SENTENCES = RetrievalSentenceSet()
CANONICAL_RUBRIC = Rubric()


@dataclass(frozen=True)
class GPTScoreConfig:
    """Settings for rubric-based scoring.

    sample_count: how many frames to show the model. Eight fits comfortably
        in common multimodal context limits while still spanning the video.
    max_retries: extra attempts after a reply with no parseable integer.
    aggregation: how per-seed scores combine into a per-prompt number.
    """

    sample_count: int = 8
    max_retries: int = 2
    aggregation: str = "mean"

    def __post_init__(self) -> None:
        if self.sample_count < 2:
            raise ValidationError("sample_count must be at least 2")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be non-negative")
        if self.aggregation != "mean":
            raise ValidationError("only 'mean' aggregation is supported")


class ScoreParseError(ValueError):
    """No usable integer could be extracted from the model's reply."""


class RubricViolationError(ValueError):
    """The model answered with an integer outside the 1..5 scale."""


def mtscore_coarse(profile: RetrievalProfile) -> float:
    """Share of retrieval probability mass on the metamorphic sentences.

    Computed in exact rational arithmetic with a single rounding at the end,
    so scaling every probability by the same factor cannot move the result.
    """
    meta = sum((Fraction(p) for p in profile.meta_probs), start=Fraction(0))
    gen = sum((Fraction(p) for p in profile.gen_probs), start=Fraction(0))
    total = meta + gen
    if total == 0:
        raise ValidationError("degenerate retrieval profile: all probabilities are zero")
    return float(meta / total)


def classify_video(profile: RetrievalProfile) -> str:
    """Vote a video 'general' or 'metamorphic' from its normalized profile.

    A video is general when more than half the probability mass favors the
    general sentences; the boundary itself counts as metamorphic. Profiles
    that do not sum to 1 are rejected rather than silently rescaled, because
    the majority rule is only meaningful on a normalized vote.
    """
    if not profile.normalized:
        total = sum(profile.meta_probs) + sum(profile.gen_probs)
        raise ValidationError(
            f"profile sums to {total!r}; normalize the probabilities to 1 "
            "before classification"
        )
    gen = sum((Fraction(p) for p in profile.gen_probs), start=Fraction(0))
    total = gen + sum((Fraction(p) for p in profile.meta_probs), start=Fraction(0))
    return "general" if gen / total > Fraction(1, 2) else "metamorphic"


def sample_frames_uniform(frame_count: int, sample_count: int) -> list[int]:
    """Evenly spaced frame indices covering both endpoints.

    Short videos are returned whole, in order, without repeats.
    """
    if frame_count < 1:
        raise ValidationError("cannot sample from an empty video")
    if sample_count < 2:
        raise ValidationError("sample_count must be at least 2")
    if frame_count <= sample_count:
        return list(range(frame_count))
    step = (frame_count - 1) / (sample_count - 1)
    return [round(k * step) for k in range(sample_count)]


_INTEGER_RE = re.compile(r"-?\d+")

RubricBackend = Callable[[Sequence[Any], Rubric], str]


def parse_rubric_reply(reply: str) -> int:
    """First integer in the reply, required to sit on the 1..5 scale."""
    match = _INTEGER_RE.search(reply)
    if match is None:
        raise ScoreParseError(f"no integer found in reply {reply!r}")
    value = int(match.group())
    if not 1 <= value <= 5:
        raise RubricViolationError(
            f"rubric violation: reply scored {value}, outside the 1..5 scale"
        )
    return value


def gpt_mtscore(
    frames: Sequence[Any],
    rubric: Rubric = CANONICAL_RUBRIC,
    cfg: GPTScoreConfig = GPTScoreConfig(),
    backend: RubricBackend | None = None,
) -> int:
    """Grade sampled frames against the rubric via a multimodal backend.

    The backend is a callable taking (frames, rubric) and returning the raw
    reply text. Replies with no integer are retried up to cfg.max_retries
    times; an out-of-range integer fails immediately since the model saw the
    scale and ignored it. Backend transport errors propagate untouched.
    """
    if backend is None:
        raise ValidationError("a rubric backend is required")
    if len(frames) == 0:
        raise ValidationError("frames must be nonempty")
    attempts = cfg.max_retries + 1
    failure: ScoreParseError | None = None
    for _ in range(attempts):
        reply = backend(frames, rubric)
        try:
            return parse_rubric_reply(reply)
        except ScoreParseError as exc:
            failure = exc
    raise ScoreParseError(
        f"no parseable score after {attempts} attempts"
    ) from failure


def gpt_mtscore_batch(
    frame_sets: Sequence[Sequence[Any]],
    rubric: Rubric = CANONICAL_RUBRIC,
    cfg: GPTScoreConfig = GPTScoreConfig(),
    backend: RubricBackend | None = None,
    max_in_flight: int = 4,
) -> list[int]:
    """Score many frame sets with a bounded number of in-flight requests.

    Results come back in input order. The first failure propagates; callers
    needing per-item isolation should call gpt_mtscore themselves.
    """
    if max_in_flight < 1:
        raise ValidationError("max_in_flight must be at least 1")
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [
            pool.submit(gpt_mtscore, frames, rubric, cfg, backend)
            for frames in frame_sets
        ]
        return [f.result() for f in futures]
