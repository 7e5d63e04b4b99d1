"""Benchmark driver: evaluate generated videos, build leaderboards, report.

A run evaluates one model's videos against the prompt manifest, three seeds
per prompt. Metric values for each video come from a backend, which is
either a wire endpoint hosting real models or sidecar fixture files sitting
next to the videos (``seed_0.vis.json`` and friends); the sidecar mode is
what makes the test suite and offline reprocessing possible.

Failures are data, not crashes: a video that cannot be scored becomes a
failure row and the run carries on. Aggregation averages whatever records
exist, leaving genuinely missing cells empty rather than pretending a zero
was measured. Feature-space metrics computed elsewhere (UMT-FVD, UMTScore)
join the leaderboard verbatim from a CSV side channel.
"""

from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .chscore import CHScoreConfig, chscore_from_visibility
from .curation import peek_frame_count
from .mtscore import (
    GPTScoreConfig,
    mtscore_coarse,
    parse_rubric_reply,
    sample_frames_uniform,
)
from .stats import PairedSample, kendall_tau, spearman_rho
from .types import (
    MAJOR_CATEGORIES,
    BenchmarkEntry,
    EvaluationRecord,
    ValidationError,
    benchmark_entry_from_json,
    benchmark_entry_to_json,
)

METRIC_NAMES = ("chscore", "mtscore", "gpt4o_mtscore")
DOWN_IS_BETTER = frozenset({"UMT-FVD"})

_SEED_FILE_RE = re.compile(r"^seed_([0-9]+)\.[A-Za-z0-9_.]+$")


@dataclass(frozen=True)
class RunManifest:
    """One model's generated videos, keyed by the prompt they answer."""

    model_id: str
    videos: Mapping[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValidationError("model_id must be nonempty")
        if not self.videos:
            raise ValidationError("run manifest lists no videos")
        cleaned: dict[str, tuple[str, ...]] = {}
        for prompt_id, paths in self.videos.items():
            paths = tuple(str(p) for p in paths)
            if not 1 <= len(paths) <= 3:
                raise ValidationError(
                    f"prompt {prompt_id} carries {len(paths)} videos, expected 1..3"
                )
            cleaned[prompt_id] = paths
        object.__setattr__(self, "videos", cleaned)

    def video_count(self) -> int:
        return sum(len(v) for v in self.videos.values())


def discover_run_root(root: str | Path, model_id: str | None = None) -> RunManifest:
    """Scan a ``<root>/<prompt_id>/seed_<k>.<ext>`` tree into a manifest.

    Seed files are ordered by their seed number; the model id defaults to
    the directory name.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"run root {root} is not a directory")
    videos: dict[str, tuple[str, ...]] = {}
    for prompt_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        seeds = []
        for f in prompt_dir.iterdir():
            match = _SEED_FILE_RE.match(f.name)
            if match is None or not f.is_file():
                continue
            # Sidecar fixture files live beside the videos; skip them.
            if f.name.endswith((".vis.json", ".retrieval.json", ".rubric.txt")):
                continue
            seeds.append((int(match.group(1)), str(f)))
        if seeds:
            videos[prompt_dir.name] = tuple(path for _, path in sorted(seeds))
    return RunManifest(model_id=model_id or root.name, videos=videos)


def load_benchmark(path: str | Path) -> list[BenchmarkEntry]:
    """Load the JSON-lines prompt manifest, rejecting duplicate ids."""
    entries: list[BenchmarkEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = benchmark_entry_from_json(line)
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            if entry.prompt_id in seen:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate prompt_id {entry.prompt_id}"
                )
            seen.add(entry.prompt_id)
            entries.append(entry)
    if not entries:
        raise ValidationError(f"benchmark manifest {path} is empty")
    return entries


def save_benchmark(path: str | Path, entries: Sequence[BenchmarkEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(benchmark_entry_to_json(entry) + "\n")


def subset_bench150(
    entries: Sequence[BenchmarkEntry], selection_path: str | Path
) -> list[BenchmarkEntry]:
    """Filter the manifest to the published 150-prompt hard subset.

    The selection file lists one prompt_id per line: exactly 150 in total,
    exactly two per sub-category. Order follows the manifest, not the file.
    """
    lines = [
        line.strip()
        for line in Path(selection_path).read_text(encoding="utf-8").splitlines()
    ]
    wanted = [line for line in lines if line]
    if len(wanted) != 150:
        raise ValidationError(
            f"selection lists {len(wanted)} prompt ids, expected exactly 150"
        )
    if len(set(wanted)) != len(wanted):
        raise ValidationError("selection repeats a prompt id")
    by_id = {e.prompt_id: e for e in entries}
    missing = [pid for pid in wanted if pid not in by_id]
    if missing:
        raise ValidationError(
            f"selection ids missing from manifest: {', '.join(missing[:5])}"
        )
    per_sub: dict[str, int] = {}
    for pid in wanted:
        sub = by_id[pid].sub_category
        per_sub[sub] = per_sub.get(sub, 0) + 1
    offenders = {sub: n for sub, n in per_sub.items() if n != 2}
    if offenders:
        raise ValidationError(
            "selection must pick exactly 2 prompts per sub-category; got "
            + ", ".join(f"{sub}={n}" for sub, n in sorted(offenders.items()))
        )
    chosen = set(wanted)
    return [e for e in entries if e.prompt_id in chosen]


@dataclass(frozen=True)
class EvaluationFailure:
    """One metric that could not be computed for one video."""

    model_id: str
    prompt_id: str
    seed_index: int
    metric: str
    message: str

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "prompt_id": self.prompt_id,
            "seed_index": self.seed_index,
            "metric": self.metric,
            "message": self.message,
        }


@dataclass(frozen=True)
class MetricSettings:
    """Which metrics to run and with what knobs."""

    metrics: tuple[str, ...] = ("chscore", "mtscore")
    chscore: CHScoreConfig = field(default_factory=CHScoreConfig)
    gpt: GPTScoreConfig = field(default_factory=GPTScoreConfig)
    grid_size: int = 10
    workers: int = 1

    def __post_init__(self) -> None:
        metrics = tuple(self.metrics)
        if not metrics:
            raise ValidationError("enable at least one metric")
        unknown = [m for m in metrics if m not in METRIC_NAMES]
        if unknown:
            raise ValidationError(f"unknown metrics: {', '.join(unknown)}")
        if self.grid_size < 2:
            raise ValidationError("grid_size must be at least 2")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")
        object.__setattr__(self, "metrics", metrics)


class SidecarBackend:
    """Reads precomputed fixture payloads sitting next to each video.

    For ``<dir>/seed_0.mp4`` the files are ``seed_0.vis.json`` (visibility
    payload), ``seed_0.retrieval.json`` (sentence probabilities) and
    ``seed_0.rubric.txt`` (raw rubric reply text).
    """

    def _sidecar(self, video: str, suffix: str) -> Path:
        return Path(video).with_suffix("").with_name(
            Path(video).with_suffix("").name + suffix
        )

    def visibility(self, video: str, grid_size: int):
        from .types import validate_visibility

        path = self._sidecar(video, ".vis.json")
        if not path.is_file():
            raise ValidationError(f"no visibility sidecar at {path}")
        return validate_visibility(json.loads(path.read_text(encoding="utf-8")))

    def retrieval(self, video: str):
        from .types import parse_retrieval_profile

        path = self._sidecar(video, ".retrieval.json")
        if not path.is_file():
            raise ValidationError(f"no retrieval sidecar at {path}")
        return parse_retrieval_profile(json.loads(path.read_text(encoding="utf-8")))

    def rubric_reply(self, video: str, sample_count: int) -> str:
        path = self._sidecar(video, ".rubric.txt")
        if not path.is_file():
            raise ValidationError(f"no rubric sidecar at {path}")
        return path.read_text(encoding="utf-8")


class WireBackend:
    """Fetches metric inputs from an adapter over the wire protocol."""

    def __init__(self, client):
        self.client = client

    def visibility(self, video: str, grid_size: int):
        return self.client.track(video, grid_size)

    def retrieval(self, video: str):
        return self.client.retrieve(video)

    def rubric_reply(self, video: str, sample_count: int) -> str:
        frame_count = peek_frame_count(video)
        indices = sample_frames_uniform(frame_count, sample_count)
        return self.client.rubric_reply(video, indices)


def _evaluate_video(
    model_id: str,
    prompt_id: str,
    seed_index: int,
    video: str,
    backend,
    cfg: MetricSettings,
) -> tuple[EvaluationRecord | None, list[EvaluationFailure]]:
    values: dict[str, float | None] = {m: None for m in METRIC_NAMES}
    failures: list[EvaluationFailure] = []

    def attempt(metric: str, compute) -> None:
        try:
            values[metric] = compute()
        except Exception as exc:  # noqa: BLE001 - failure isolation by design
            failures.append(
                EvaluationFailure(
                    model_id=model_id,
                    prompt_id=prompt_id,
                    seed_index=seed_index,
                    metric=metric,
                    message=f"{type(exc).__name__}: {exc}",
                )
            )

    if "chscore" in cfg.metrics:
        attempt(
            "chscore",
            lambda: chscore_from_visibility(
                backend.visibility(video, cfg.grid_size), cfg.chscore
            )[0],
        )
    if "mtscore" in cfg.metrics:
        attempt("mtscore", lambda: mtscore_coarse(backend.retrieval(video)))
    if "gpt4o_mtscore" in cfg.metrics:
        attempt(
            "gpt4o_mtscore",
            lambda: float(
                parse_rubric_reply(
                    backend.rubric_reply(video, cfg.gpt.sample_count)
                )
            ),
        )

    if all(values[m] is None for m in cfg.metrics):
        return None, failures
    record = EvaluationRecord(
        model_id=model_id,
        prompt_id=prompt_id,
        seed_index=seed_index,
        chscore=values["chscore"],
        mtscore=values["mtscore"],
        gpt4o_mtscore=values["gpt4o_mtscore"],
    )
    return record, failures


@dataclass(frozen=True)
class RunResult:
    model_id: str
    records: tuple[EvaluationRecord, ...]
    failures: tuple[EvaluationFailure, ...]


def evaluate_run(
    run: RunManifest,
    bench: Sequence[BenchmarkEntry],
    backend,
    cfg: MetricSettings = MetricSettings(),
) -> RunResult:
    """Score every (prompt, seed) video; failures become rows, not aborts."""
    known = {e.prompt_id for e in bench}
    unknown = sorted(set(run.videos) - known)
    if unknown:
        raise ValidationError(
            f"run manifest names prompts absent from the benchmark: "
            f"{', '.join(unknown[:5])}"
        )

    tasks = [
        (prompt_id, seed_index, video)
        for prompt_id in sorted(run.videos)
        for seed_index, video in enumerate(run.videos[prompt_id])
    ]

    def work(task):
        prompt_id, seed_index, video = task
        return _evaluate_video(
            run.model_id, prompt_id, seed_index, video, backend, cfg
        )

    if cfg.workers == 1:
        outcomes = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(work, tasks))

    records = [r for r, _ in outcomes if r is not None]
    failures = [f for _, fs in outcomes for f in fs]
    records.sort(key=lambda r: (r.prompt_id, r.seed_index))
    failures.sort(key=lambda f: (f.prompt_id, f.seed_index, f.metric))
    if not records:
        raise ValidationError("zero evaluable videos in this run")
    return RunResult(
        model_id=run.model_id, records=tuple(records), failures=tuple(failures)
    )


@dataclass(frozen=True)
class LeaderboardRow:
    model_id: str
    overall: Mapping[str, float | None]
    overall_counts: Mapping[str, int]
    per_category: Mapping[str, Mapping[str, float | None]]
    category_counts: Mapping[str, Mapping[str, int]]
    external: Mapping[str, float]

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "overall": dict(self.overall),
            "overall_counts": dict(self.overall_counts),
            "per_category": {c: dict(v) for c, v in self.per_category.items()},
            "category_counts": {c: dict(v) for c, v in self.category_counts.items()},
            "external": dict(self.external),
        }


@dataclass(frozen=True)
class Leaderboard:
    rows: tuple[LeaderboardRow, ...]

    def row(self, model_id: str) -> LeaderboardRow:
        for row in self.rows:
            if row.model_id == model_id:
                return row
        raise KeyError(model_id)

    def as_dict(self) -> dict:
        return {"models": {row.model_id: row.as_dict() for row in self.rows}}


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def aggregate(
    records: Sequence[EvaluationRecord],
    bench: Sequence[BenchmarkEntry],
    external: Mapping[str, Mapping[str, float]] | None = None,
) -> Leaderboard:
    """Per-model means, overall and per major category.

    A missing metric stays None; zeros only ever mean a measured zero.
    External model-level columns are attached untouched.
    """
    if not records and not external:
        raise ValidationError("nothing to aggregate")
    category_of = {e.prompt_id: e.major_category for e in bench}
    by_model: dict[str, list[EvaluationRecord]] = {}
    for record in records:
        if record.prompt_id not in category_of:
            raise ValidationError(
                f"record prompt {record.prompt_id} is absent from the benchmark"
            )
        by_model.setdefault(record.model_id, []).append(record)
    external = {m: dict(cols) for m, cols in (external or {}).items()}
    model_ids = sorted(set(by_model) | set(external))

    rows = []
    for model_id in model_ids:
        model_records = by_model.get(model_id, [])
        groups: dict[str, list[EvaluationRecord]] = {c: [] for c in MAJOR_CATEGORIES}
        for record in model_records:
            groups[category_of[record.prompt_id]].append(record)

        def summarize(subset: list[EvaluationRecord]):
            means: dict[str, float | None] = {}
            counts: dict[str, int] = {}
            for metric in METRIC_NAMES:
                present = [
                    getattr(r, metric) for r in subset if getattr(r, metric) is not None
                ]
                means[metric] = _mean_or_none(present)
                counts[metric] = len(present)
            return means, counts

        overall, overall_counts = summarize(model_records)
        per_category = {}
        category_counts = {}
        for category in MAJOR_CATEGORIES:
            means, counts = summarize(groups[category])
            per_category[category] = means
            category_counts[category] = counts
        rows.append(
            LeaderboardRow(
                model_id=model_id,
                overall=overall,
                overall_counts=overall_counts,
                per_category=per_category,
                category_counts=category_counts,
                external=external.get(model_id, {}),
            )
        )
    return Leaderboard(rows=tuple(rows))


def correlate(
    metric_by_model: Mapping[str, float], human_by_model: Mapping[str, float]
) -> tuple[float, float]:
    """Kendall and Spearman correlation over models present in both tables."""
    shared = sorted(set(metric_by_model) & set(human_by_model))
    if len(shared) < 2:
        raise ValidationError(
            f"need at least 2 overlapping models, found {len(shared)}"
        )
    sample = PairedSample(
        x=np.array([metric_by_model[m] for m in shared], dtype=float),
        y=np.array([human_by_model[m] for m in shared], dtype=float),
    )
    return kendall_tau(sample), spearman_rho(sample)


def load_external_csv(path: str | Path) -> dict[str, dict[str, float]]:
    """Model-level metric columns computed outside this toolkit.

    Expected header: ``model_id`` plus one column per external metric.
    """
    table: dict[str, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "model_id" not in reader.fieldnames:
            raise ValidationError(f"{path} needs a model_id column")
        for row in reader:
            model_id = row.pop("model_id")
            if not model_id:
                raise ValidationError(f"{path}: empty model_id")
            values = {}
            for name, cell in row.items():
                if cell is None or cell == "":
                    continue
                try:
                    values[name] = float(cell)
                except ValueError as exc:
                    raise ValidationError(
                        f"{path}: column {name} for {model_id} is not numeric"
                    ) from exc
            table[model_id] = values
    if not table:
        raise ValidationError(f"{path} lists no models")
    return table


def load_human_csv(path: str | Path) -> dict[str, float]:
    """Per-model human preference ratings: header model_id,rating."""
    ratings: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"model_id", "rating"} <= set(
            reader.fieldnames
        ):
            raise ValidationError(f"{path} needs model_id and rating columns")
        for row in reader:
            ratings[row["model_id"]] = float(row["rating"])
    if not ratings:
        raise ValidationError(f"{path} lists no ratings")
    return ratings


def report_document(
    leaderboard: Leaderboard,
    results: Sequence[RunResult] = (),
    bench: Sequence[BenchmarkEntry] | None = None,
) -> dict:
    """Assemble the full report object; generated_at is the only field two
    otherwise-identical runs will disagree on."""
    return {
        "schema": "tlbench-report/1",
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "bench_prompt_count": len(bench) if bench is not None else None,
        "leaderboard": leaderboard.as_dict(),
        "records": {
            result.model_id: [r.as_dict() for r in result.records]
            for result in results
        },
        "failures": {
            result.model_id: [f.as_dict() for f in result.failures]
            for result in results
        },
    }


def write_report_json(path: str | Path, document: dict) -> None:
    Path(path).write_text(
        json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_report_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


_TABLE_COLUMNS = (
    ("UMT-FVD", "external"),
    ("UMTScore", "external"),
    ("MTScore", "mtscore"),
    ("CHScore", "chscore"),
    ("GPT4o-MTScore", "gpt4o_mtscore"),
)


def _cell(value: float | None) -> str:
    return "" if value is None else f"{value:.3f}"


def render_markdown(leaderboard: Leaderboard) -> str:
    """Leaderboard as a Markdown table, columns shaped like the usual
    published comparison: external feature metrics first, then ours."""
    headers = ["Model"]
    for label, _ in _TABLE_COLUMNS:
        arrow = "↓" if label in DOWN_IS_BETTER else "↑"
        headers.append(f"{label}{arrow}")
    lines = [
        "| " + " | ".join(headers) + " |",
        "|" + "|".join(["---"] * len(headers)) + "|",
    ]
    for row in leaderboard.rows:
        cells = [row.model_id]
        for label, source in _TABLE_COLUMNS:
            if source == "external":
                cells.append(_cell(row.external.get(label)))
            else:
                cells.append(_cell(row.overall.get(source)))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_report_csv(path: str | Path, leaderboard: Leaderboard) -> None:
    """Wide CSV: one row per model and scope (overall or a category)."""
    fieldnames = ["model_id", "scope"]
    external_names = sorted({name for row in leaderboard.rows for name in row.external})
    fieldnames += external_names
    for metric in METRIC_NAMES:
        fieldnames += [metric, f"{metric}_count"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in leaderboard.rows:
            scopes = [("overall", row.overall, row.overall_counts)] + [
                (c, row.per_category[c], row.category_counts[c])
                for c in MAJOR_CATEGORIES
            ]
            for scope, means, counts in scopes:
                out: dict[str, Any] = {"model_id": row.model_id, "scope": scope}
                if scope == "overall":
                    for name in external_names:
                        if name in row.external:
                            out[name] = row.external[name]
                for metric in METRIC_NAMES:
                    value = means.get(metric)
                    out[metric] = "" if value is None else repr(value)
                    out[f"{metric}_count"] = counts.get(metric, 0)
                writer.writerow(out)
