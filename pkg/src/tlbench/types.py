"""Shared domain types for the time-lapse video evaluation toolkit.

Everything here is immutable after construction and safe to share across
worker threads. Wire payloads (visibility matrices, retrieval profiles,
benchmark manifests) have a single canonical JSON form; validation either
returns a fully-formed typed value or raises :class:`ValidationError`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

MAJOR_CATEGORIES = ("biological", "human-created", "meteorological", "physical")

# Prompts are bounded by whitespace word count as a tokenizer-free proxy.
PROMPT_WORD_LIMIT = 77

# A profile counts as normalized when its probabilities sum to 1 within this.
NORMALIZATION_TOLERANCE = 1e-6


class ValidationError(ValueError):
    """A payload or field violates a domain invariant."""


def _as_finite_float(value: Any, what: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} is not a number: {value!r}") from None
    if not np.isfinite(out):
        raise ValidationError(f"{what} is not finite: {value!r}")
    return out


@dataclass(frozen=True)
class VisibilityMatrix:
    """Per-frame, per-point visibility flags produced by a point tracker.

    ``vis[i, j]`` is True when tracked point ``j`` is visible in frame ``i``.
    When the points were seeded as a square grid, ``grid_size`` records the
    side length and the point count must equal ``grid_size ** 2``.
    """

    vis: np.ndarray
    grid_size: int | None = None

    def __post_init__(self) -> None:
        vis = np.asarray(self.vis)
        if vis.dtype != np.bool_:
            raise ValidationError("non-boolean entries in visibility matrix")
        if vis.ndim != 2:
            raise ValidationError("visibility matrix must be 2-dimensional")
        frames, points = vis.shape
        if frames < 1:
            raise ValidationError("empty frames: need at least one frame")
        if points < 1:
            raise ValidationError("need at least one tracked point")
        if self.grid_size is not None:
            if int(self.grid_size) < 1:
                raise ValidationError("grid_size must be positive")
            if int(self.grid_size) ** 2 != points:
                raise ValidationError(
                    f"grid mismatch: grid_size={self.grid_size} implies "
                    f"{int(self.grid_size) ** 2} points, got {points}"
                )
        vis = vis.copy()
        vis.setflags(write=False)
        object.__setattr__(self, "vis", vis)
        if self.grid_size is not None:
            object.__setattr__(self, "grid_size", int(self.grid_size))

    @property
    def frames(self) -> int:
        return int(self.vis.shape[0])

    @property
    def points(self) -> int:
        return int(self.vis.shape[1])


def validate_visibility(raw: Any) -> VisibilityMatrix:
    """Validate a decoded visibility payload into a :class:`VisibilityMatrix`.

    The payload shape is ``{"frames": F, "points": N, "grid_size": G|null,
    "vis": [[bool, ...], ...]}`` with one row per frame.
    """
    if not isinstance(raw, Mapping):
        raise ValidationError("visibility payload must be a JSON object")
    missing = {"frames", "points", "vis"} - set(raw)
    if missing:
        raise ValidationError(f"visibility payload missing keys: {sorted(missing)}")
    frames, points = raw["frames"], raw["points"]
    if not isinstance(frames, int) or isinstance(frames, bool) or frames < 1:
        raise ValidationError("empty frames: 'frames' must be a positive integer")
    if not isinstance(points, int) or isinstance(points, bool) or points < 1:
        raise ValidationError("'points' must be a positive integer")
    rows = raw["vis"]
    if not isinstance(rows, list) or len(rows) != frames:
        raise ValidationError(
            f"dimension mismatch: expected {frames} rows, got "
            f"{len(rows) if isinstance(rows, list) else type(rows).__name__}"
        )
    grid = np.empty((frames, points), dtype=bool)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != points:
            raise ValidationError(
                f"dimension mismatch: row {i} does not have {points} entries"
            )
        for j, cell in enumerate(row):
            if not isinstance(cell, bool):
                raise ValidationError(
                    f"non-boolean entries: vis[{i}][{j}] = {cell!r}"
                )
            grid[i, j] = cell
    grid_size = raw.get("grid_size")
    if grid_size is not None and (not isinstance(grid_size, int) or isinstance(grid_size, bool)):
        raise ValidationError("'grid_size' must be an integer or null")
    return VisibilityMatrix(vis=grid, grid_size=grid_size)


def visibility_payload(matrix: VisibilityMatrix) -> dict:
    """Canonical JSON form of a visibility matrix (inverse of validation)."""
    return {
        "frames": matrix.frames,
        "points": matrix.points,
        "grid_size": matrix.grid_size,
        "vis": [[bool(v) for v in row] for row in matrix.vis],
    }


@dataclass(frozen=True)
class MissingSeries:
    """Per-frame missed-point fractions and their consecutive differences."""

    m: np.ndarray
    dm: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=float)
        dm = np.asarray(self.dm, dtype=float)
        if m.ndim != 1 or m.size < 1:
            raise ValidationError("missed-point series must be a nonempty vector")
        if dm.ndim != 1 or dm.size != m.size - 1:
            raise ValidationError("delta series must have length len(m) - 1")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise ValidationError("missed-point fractions must lie in [0, 1]")
        if not np.array_equal(dm, np.diff(m)):
            raise ValidationError("deltas must equal consecutive differences of m")
        for name, arr in (("m", m), ("dm", dm)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def frames(self) -> int:
        return int(self.m.size)


@dataclass(frozen=True)
class CoherenceComponents:
    """The five temporal-incoherence penalties plus the threshold in force.

    ``max_delta`` may be negative in raw (unclamped) mode when visibility only
    ever improves; all other components are non-negative by construction.
    """

    missed_ratio: float
    delta_std: float
    cut_ratio: float
    cut_delta_sum: float
    max_delta: float
    threshold: float

    def __post_init__(self) -> None:
        for name in ("missed_ratio", "delta_std", "cut_ratio", "cut_delta_sum"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if self.missed_ratio > 1.0 or self.cut_ratio > 1.0:
            raise ValidationError("missed_ratio and cut_ratio cannot exceed 1")
        if not np.isfinite(self.max_delta):
            raise ValidationError("max_delta must be finite")
        if not 0.0 < self.threshold:
            raise ValidationError("threshold must be positive")

    def total(self) -> float:
        return (
            self.missed_ratio
            + self.delta_std
            + self.cut_ratio
            + self.cut_delta_sum
            + self.max_delta
        )

    def as_dict(self) -> dict:
        return {
            "missed_ratio": self.missed_ratio,
            "delta_std": self.delta_std,
            "cut_ratio": self.cut_ratio,
            "cut_delta_sum": self.cut_delta_sum,
            "max_delta": self.max_delta,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class RetrievalProfile:
    """Relevance probabilities of one video against the canonical sentences.

    ``normalized`` is computed at construction: True when the probabilities
    over both sentence groups sum to 1 within ``NORMALIZATION_TOLERANCE``.
    """

    meta_probs: tuple[float, ...]
    gen_probs: tuple[float, ...]
    normalized: bool = field(init=False)

    def __post_init__(self) -> None:
        meta = tuple(_as_finite_float(p, "metamorphic probability") for p in self.meta_probs)
        gen = tuple(_as_finite_float(p, "general probability") for p in self.gen_probs)
        if len(meta) < 1 or len(gen) < 1:
            raise ValidationError("profile needs at least one probability per group")
        if any(p < 0.0 for p in meta + gen):
            raise ValidationError("probabilities must be non-negative")
        object.__setattr__(self, "meta_probs", meta)
        object.__setattr__(self, "gen_probs", gen)
        total = sum(meta) + sum(gen)
        object.__setattr__(self, "normalized", abs(total - 1.0) <= NORMALIZATION_TOLERANCE)


def parse_retrieval_profile(raw: Any) -> RetrievalProfile:
    """Validate a retrieval payload ``{"sentence_probs": [p1..p10]}``.

    The ten probabilities follow the canonical sentence order: the first five
    describe general videos, the last five describe time-lapse videos.
    """
    if not isinstance(raw, Mapping) or "sentence_probs" not in raw:
        raise ValidationError("retrieval payload must contain 'sentence_probs'")
    probs = raw["sentence_probs"]
    if not isinstance(probs, list) or len(probs) != 10:
        raise ValidationError("expected exactly 10 sentence probabilities")
    values = [_as_finite_float(p, f"sentence_probs[{i}]") for i, p in enumerate(probs)]
    return RetrievalProfile(meta_probs=tuple(values[5:]), gen_probs=tuple(values[:5]))


def retrieval_payload(profile: RetrievalProfile) -> dict:
    if len(profile.gen_probs) != 5 or len(profile.meta_probs) != 5:
        raise ValidationError("wire profiles carry exactly 5 + 5 probabilities")
    return {"sentence_probs": list(profile.gen_probs) + list(profile.meta_probs)}


_SLUG_RE = re.compile(r"[^a-z0-9]+")


def make_prompt_id(major_category: str, sub_category: str, index: int) -> str:
    """Stable ``<major>-<sub>-<index>`` identifier for joins across runs."""
    major = _SLUG_RE.sub("-", major_category.lower()).strip("-")
    sub = _SLUG_RE.sub("-", sub_category.lower()).strip("-")
    return f"{major}-{sub}-{index:04d}"


@dataclass(frozen=True)
class BenchmarkEntry:
    """One benchmark row: prompt, reference video and category labels."""

    prompt_id: str
    prompt: str
    reference_video: str
    sub_category: str
    major_category: str

    def __post_init__(self) -> None:
        if not self.prompt_id:
            raise ValidationError("prompt_id must be nonempty")
        if not self.prompt or not self.prompt.strip():
            raise ValidationError("prompt must be nonempty")
        if len(self.prompt.split()) > PROMPT_WORD_LIMIT:
            raise ValidationError(
                f"prompt exceeds {PROMPT_WORD_LIMIT} words: {self.prompt_id}"
            )
        if self.major_category not in MAJOR_CATEGORIES:
            raise ValidationError(
                f"unknown major_category {self.major_category!r}; "
                f"expected one of {MAJOR_CATEGORIES}"
            )
        if not self.sub_category:
            raise ValidationError("sub_category must be nonempty")


def benchmark_entry_from_json(line: str) -> BenchmarkEntry:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest line is not valid JSON: {exc}") from None
    if not isinstance(raw, Mapping):
        raise ValidationError("manifest line must be a JSON object")
    required = ("prompt_id", "prompt", "reference_video", "sub_category", "major_category")
    missing = [k for k in required if k not in raw]
    if missing:
        raise ValidationError(f"manifest line missing keys: {missing}")
    fields = {k: raw[k] for k in required}
    for key, value in fields.items():
        if not isinstance(value, str):
            raise ValidationError(f"manifest field {key!r} must be a string")
    return BenchmarkEntry(**fields)


def benchmark_entry_to_json(entry: BenchmarkEntry) -> str:
    return json.dumps(
        {
            "prompt_id": entry.prompt_id,
            "prompt": entry.prompt,
            "reference_video": entry.reference_video,
            "sub_category": entry.sub_category,
            "major_category": entry.major_category,
        },
        sort_keys=True,
    )


@dataclass(frozen=True)
class EvaluationRecord:
    """Metric values for one (model, prompt, seed) generated video."""

    model_id: str
    prompt_id: str
    seed_index: int
    chscore: float | None = None
    mtscore: float | None = None
    gpt4o_mtscore: float | None = None
    external: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.model_id or not self.prompt_id:
            raise ValidationError("model_id and prompt_id must be nonempty")
        if not 0 <= int(self.seed_index) <= 2:
            raise ValidationError("seed_index must be 0, 1 or 2")
        if self.chscore is not None and not self.chscore > 0.0:
            raise ValidationError("chscore must be > 0 when present")
        if self.mtscore is not None and not 0.0 <= self.mtscore <= 1.0:
            raise ValidationError("mtscore must lie in [0, 1] when present")
        if self.gpt4o_mtscore is not None and not 1.0 <= self.gpt4o_mtscore <= 5.0:
            raise ValidationError("gpt4o_mtscore must lie in [1, 5] when present")
        ext = dict(self.external)
        for name, value in ext.items():
            ext[name] = _as_finite_float(value, f"external metric {name!r}")
        object.__setattr__(self, "external", ext)

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "prompt_id": self.prompt_id,
            "seed_index": self.seed_index,
            "chscore": self.chscore,
            "mtscore": self.mtscore,
            "gpt4o_mtscore": self.gpt4o_mtscore,
            "external": dict(sorted(self.external.items())),
        }


def record_from_dict(raw: Mapping[str, Any]) -> EvaluationRecord:
    if not isinstance(raw, Mapping):
        raise ValidationError("record must be a JSON object")
    try:
        return EvaluationRecord(
            model_id=raw["model_id"],
            prompt_id=raw["prompt_id"],
            seed_index=raw["seed_index"],
            chscore=raw.get("chscore"),
            mtscore=raw.get("mtscore"),
            gpt4o_mtscore=raw.get("gpt4o_mtscore"),
            external=raw.get("external") or {},
        )
    except KeyError as exc:
        raise ValidationError(f"record missing key: {exc}") from None
