"""Canonical sentence and rubric texts, frozen byte for byte.

The adapter keeps its own copy of the texts the metrics are defined
against. Requests arrive carrying sha256 digests of the caller's copy; we
answer only when they match ours, because a retrieval probability or a
rubric grade computed against different wording is a different metric
wearing the same name.

The EXPECTED_* digests below are the published values. If an edit here
changes a digest, apply the same edit to the evaluation core and bump both
in lockstep; the startup check exists to make that impossible to forget.
"""

from __future__ import annotations

import hashlib

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

EXPECTED_SENTENCES_SHA256 = (
    "03cb145a9db01fd0cd039f4d48d0ad6858ad69341fe3471f3247189d8e2804fa"
)
EXPECTED_RUBRIC_SHA256 = (
    "f7313422901238c059f9e757d838506551c69320e37924aa3e0896650c63d9f2"
)


class CanonDriftError(RuntimeError):
    """Our canonical texts no longer hash to the published digests."""


def sentences_checksum() -> str:
    joined = "\n".join(GENERAL_SENTENCES + METAMORPHIC_SENTENCES)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def rubric_checksum() -> str:
    lines = [f"{k}. {RUBRIC_LEVELS[k]}" for k in sorted(RUBRIC_LEVELS)]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def verify_canon() -> None:
    """Refuse to serve with drifted texts; called on startup."""
    got_s = sentences_checksum()
    if got_s != EXPECTED_SENTENCES_SHA256:
        raise CanonDriftError(
            f"sentence texts hash to {got_s}, expected {EXPECTED_SENTENCES_SHA256}"
        )
    got_r = rubric_checksum()
    if got_r != EXPECTED_RUBRIC_SHA256:
        raise CanonDriftError(
            f"rubric texts hash to {got_r}, expected {EXPECTED_RUBRIC_SHA256}"
        )
