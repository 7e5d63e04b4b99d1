"""Command-line entry points.

Five commands ship with the package: ``chscore`` and ``mtscore`` for scoring
single payloads, ``gptscore`` for rubric grading through a backend,
``curate`` for the clip pipeline, and ``bench`` for full benchmark runs.
They are thin argument shells over the library; anything interesting lives
in the modules they call.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from .chscore import CHScoreConfig, chscore_from_visibility
from .curation import (
    ClipBoundary,
    ClipFeature,
    caption_clip,
    load_frames,
    merge_similar_clips,
    filter_metamorphic,
    split_sequence,
    DEFAULT_ETA,
    DEFAULT_TAU_PER_PIXEL,
)
from .harness import (
    MetricSettings,
    SidecarBackend,
    WireBackend,
    aggregate,
    correlate,
    discover_run_root,
    evaluate_run,
    load_benchmark,
    load_external_csv,
    load_human_csv,
    load_report_json,
    render_markdown,
    report_document,
    save_benchmark,
    subset_bench150,
    write_report_csv,
    write_report_json,
)
from .mtscore import (
    CANONICAL_RUBRIC,
    CANONICAL_SENTENCES,
    classify_video,
    mtscore_coarse,
    parse_rubric_reply,
    sample_frames_uniform,
)
from .curation import peek_frame_count
from .protocol import BackendClient, HttpEndpoint, ProtocolError, StdioEndpoint
from .types import (
    ValidationError,
    parse_retrieval_profile,
    record_from_dict,
    validate_visibility,
)

STUB_BACKEND = "stub"
SIDECAR_BACKEND = "sidecar"


def _endpoint_from_spec(spec: str, timeout: float, bearer_token: str | None):
    if spec.startswith(("http://", "https://")):
        return HttpEndpoint(spec, timeout=timeout, bearer_token=bearer_token)
    if spec == STUB_BACKEND:
        argv = [sys.executable, "-m", "tlbench.stub_backend"]
    else:
        argv = shlex.split(spec)
    return StdioEndpoint(argv, timeout=timeout)


def _client_from_spec(spec: str, timeout: float, bearer_token: str | None):
    endpoint = _endpoint_from_spec(spec, timeout, bearer_token)
    client = BackendClient(
        endpoint=endpoint,
        sentences_checksum=CANONICAL_SENTENCES.checksum(),
        rubric_checksum=CANONICAL_RUBRIC.checksum(),
    )
    return endpoint, client


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def chscore_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chscore",
        description="Temporal coherence score from a visibility payload.",
    )
    parser.add_argument("--vis", required=True, help="visibility payload JSON file")
    parser.add_argument("--threshold", type=float, default=0.1)
    parser.add_argument("--epsilon", type=float, default=1e-6)
    parser.add_argument(
        "--raw-max",
        action="store_true",
        help="keep a negative largest delta instead of clamping it to 0",
    )
    parser.add_argument("--report", help="write score, components and series here")
    args = parser.parse_args(argv)
    try:
        payload = json.loads(Path(args.vis).read_text(encoding="utf-8"))
        vis = validate_visibility(payload)
        cfg = CHScoreConfig(
            threshold=args.threshold,
            epsilon=args.epsilon,
            clamp_negative_max=not args.raw_max,
        )
        score, components, series = chscore_from_visibility(vis, cfg)
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        return _fail(str(exc))
    print(f"chscore: {score}")
    for name, value in components.as_dict().items():
        print(f"{name}: {value}")
    if args.report:
        doc = {
            "chscore": score,
            "components": components.as_dict(),
            "series": {"m": series.m.tolist(), "dm": series.dm.tolist()},
        }
        Path(args.report).write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return 0


def mtscore_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mtscore",
        description="Coarse metamorphic score from a retrieval profile.",
    )
    parser.add_argument(
        "--profile", required=True, help="JSON file with sentence_probs"
    )
    parser.add_argument(
        "--classify",
        action="store_true",
        help="also vote general/metamorphic (requires a normalized profile)",
    )
    parser.add_argument("--report", help="write score and class here")
    args = parser.parse_args(argv)
    try:
        payload = json.loads(Path(args.profile).read_text(encoding="utf-8"))
        profile = parse_retrieval_profile(payload)
        score = mtscore_coarse(profile)
        label = classify_video(profile) if args.classify else None
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        return _fail(str(exc))
    print(f"mtscore: {score}")
    if label is not None:
        print(f"class: {label}")
    if args.report:
        doc = {"mtscore": score, "class": label}
        Path(args.report).write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return 0


def gptscore_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gptscore",
        description="Rubric-based change grade for a video via a backend.",
    )
    parser.add_argument("--video", required=True)
    parser.add_argument(
        "--frames", type=int, default=8, help="how many frames to sample"
    )
    parser.add_argument(
        "--backend",
        default=STUB_BACKEND,
        help="'stub', an http(s) URL, or a subprocess command line",
    )
    parser.add_argument("--timeout", type=float, default=60.0)
    parser.add_argument("--bearer-token", default=None)
    args = parser.parse_args(argv)
    try:
        frame_count = peek_frame_count(args.video)
        indices = sample_frames_uniform(frame_count, args.frames)
        endpoint, client = _client_from_spec(
            args.backend, args.timeout, args.bearer_token
        )
        with endpoint:
            reply = client.rubric_reply(args.video, indices)
        value = parse_rubric_reply(reply)
    except (ValidationError, ProtocolError, ValueError) as exc:
        return _fail(str(exc))
    print(f"gpt4o_mtscore: {value}")
    return 0


def _write_clips(path: str, boundary: ClipBoundary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for index, (start, end) in enumerate(boundary.clips):
            fh.write(
                json.dumps(
                    {"clip_index": index, "start_frame": start, "end_frame": end},
                    sort_keys=True,
                )
                + "\n"
            )


def _read_clips(path: str) -> ClipBoundary:
    clips = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            clips.append((row["start_frame"], row["end_frame"]))
    return ClipBoundary(clips=tuple(clips))


def curate_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="curate", description="Clip cutting, merging, filtering, captioning."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_split = sub.add_parser("split", help="cut a sequence at hard transitions")
    p_split.add_argument("--frames", required=True, help="frame payload or image dir")
    p_split.add_argument(
        "--tau",
        type=float,
        default=DEFAULT_TAU_PER_PIXEL,
        help="per-pixel transition threshold",
    )
    p_split.add_argument("--out", required=True, help="clip manifest (JSON lines)")

    p_merge = sub.add_parser("merge", help="re-join clips with similar boundaries")
    p_merge.add_argument("--clips", required=True)
    p_merge.add_argument(
        "--features",
        required=True,
        help="JSON list of {clip_index, frame_position, vector}",
    )
    p_merge.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p_merge.add_argument("--out", required=True)

    p_filter = sub.add_parser("filter", help="keep clips voted metamorphic")
    p_filter.add_argument("--clips", required=True)
    p_filter.add_argument(
        "--profiles", required=True, help="JSON list of sentence_probs payloads"
    )
    p_filter.add_argument("--out", required=True)

    p_caption = sub.add_parser("caption", help="caption a clip through a backend")
    p_caption.add_argument("--frames", required=True)
    p_caption.add_argument("--n-frames", type=int, default=8)
    p_caption.add_argument("--backend", default=STUB_BACKEND)
    p_caption.add_argument("--timeout", type=float, default=60.0)
    p_caption.add_argument("--bearer-token", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "split":
            seq = load_frames(args.frames)
            boundary = split_sequence(seq, tau_per_pixel=args.tau)
            _write_clips(args.out, boundary)
            print(f"clips: {len(boundary)}")
        elif args.command == "merge":
            boundary = _read_clips(args.clips)
            rows = json.loads(Path(args.features).read_text(encoding="utf-8"))
            feats = [
                ClipFeature(
                    clip_index=row["clip_index"],
                    boundary_feature=row["vector"],
                    frame_position=row["frame_position"],
                )
                for row in rows
            ]
            merged = merge_similar_clips(boundary, feats, eta=args.eta)
            _write_clips(args.out, merged)
            print(f"clips: {len(merged)}")
        elif args.command == "filter":
            boundary = _read_clips(args.clips)
            payloads = json.loads(Path(args.profiles).read_text(encoding="utf-8"))
            profiles = [parse_retrieval_profile(p) for p in payloads]
            kept = filter_metamorphic(list(boundary.clips), profiles)
            with open(args.out, "w", encoding="utf-8") as fh:
                for index, (start, end) in enumerate(kept):
                    fh.write(
                        json.dumps(
                            {
                                "clip_index": index,
                                "start_frame": start,
                                "end_frame": end,
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
            print(f"kept: {len(kept)}")
        else:  # caption
            seq = load_frames(args.frames)
            endpoint, client = _client_from_spec(
                args.backend, args.timeout, args.bearer_token
            )
            with endpoint:
                video = str(args.frames)
                summary = caption_clip(
                    seq,
                    args.n_frames,
                    lambda frame, index: client.caption(video, index),
                    lambda pairs: client.summarize(pairs),
                )
            print(summary)
    except (OSError, json.JSONDecodeError, KeyError, ValidationError, ProtocolError) as exc:
        return _fail(str(exc))
    return 0


def _metric_names(raw: str) -> tuple[str, ...]:
    names = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        # The rubric metric answers to its report column name too.
        names.append("gpt4o_mtscore" if token == "gptscore" else token)
    return tuple(names)


def _write_report_family(out: str, document: dict, leaderboard) -> None:
    write_report_json(out, document)
    base = Path(out)
    write_report_csv(base.with_suffix(".csv"), leaderboard)
    base.with_suffix(".md").write_text(
        render_markdown(leaderboard), encoding="utf-8"
    )


def bench_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bench", description="Benchmark runs, leaderboards, correlation."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate one model's run directory")
    p_run.add_argument("--manifest", required=True, help="benchmark JSON lines")
    p_run.add_argument("--run-root", required=True)
    p_run.add_argument("--model", default=None, help="defaults to the directory name")
    p_run.add_argument("--metrics", default="chscore,mtscore")
    p_run.add_argument(
        "--backend",
        default=SIDECAR_BACKEND,
        help="'sidecar', 'stub', an http(s) URL, or a subprocess command",
    )
    p_run.add_argument("--external", help="CSV of externally computed model columns")
    p_run.add_argument("--grid-size", type=int, default=10)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--timeout", type=float, default=60.0)
    p_run.add_argument("--bearer-token", default=None)
    p_run.add_argument("--out", required=True, help="report JSON path")

    p_agg = sub.add_parser("aggregate", help="combine run reports into one board")
    p_agg.add_argument("--records", nargs="+", required=True, help="report JSON files")
    p_agg.add_argument("--manifest", required=True)
    p_agg.add_argument("--external", default=None)
    p_agg.add_argument("--out", required=True)

    p_corr = sub.add_parser("correlate", help="rank-correlate a metric with humans")
    p_corr.add_argument("--report", required=True)
    p_corr.add_argument("--metric", default="mtscore")
    p_corr.add_argument("--human", required=True, help="CSV with model_id,rating")

    p_subset = sub.add_parser("subset", help="cut the manifest down to Bench-150")
    p_subset.add_argument("--manifest", required=True)
    p_subset.add_argument("--selection", required=True, help="150 prompt ids, one per line")
    p_subset.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            bench = load_benchmark(args.manifest)
            run = discover_run_root(args.run_root, model_id=args.model)
            cfg = MetricSettings(
                metrics=_metric_names(args.metrics),
                grid_size=args.grid_size,
                workers=args.workers,
            )
            if args.backend == SIDECAR_BACKEND:
                backend = SidecarBackend()
                result = evaluate_run(run, bench, backend, cfg)
            else:
                endpoint, client = _client_from_spec(
                    args.backend, args.timeout, args.bearer_token
                )
                with endpoint:
                    result = evaluate_run(run, bench, WireBackend(client), cfg)
            external = load_external_csv(args.external) if args.external else None
            board = aggregate(result.records, bench, external=external)
            document = report_document(board, [result], bench)
            _write_report_family(args.out, document, board)
            print(render_markdown(board), end="")
            print(f"records: {len(result.records)} failures: {len(result.failures)}")
        elif args.command == "aggregate":
            bench = load_benchmark(args.manifest)
            records = []
            for path in args.records:
                doc = load_report_json(path)
                for rows in doc.get("records", {}).values():
                    records.extend(record_from_dict(r) for r in rows)
            external = load_external_csv(args.external) if args.external else None
            board = aggregate(records, bench, external=external)
            document = report_document(board, [], bench)
            _write_report_family(args.out, document, board)
            print(render_markdown(board), end="")
        elif args.command == "correlate":
            doc = load_report_json(args.report)
            models = doc["leaderboard"]["models"]
            column = {}
            for model_id, row in models.items():
                value = row["overall"].get(args.metric)
                if value is None:
                    value = row["external"].get(args.metric)
                if value is not None:
                    column[model_id] = value
            human = load_human_csv(args.human)
            tau, rho = correlate(column, human)
            print(f"kendall_tau: {tau}")
            print(f"spearman_rho: {rho}")
        else:  # subset
            bench = load_benchmark(args.manifest)
            subset = subset_bench150(bench, args.selection)
            save_benchmark(args.out, subset)
            print(f"entries: {len(subset)}")
    except (OSError, json.JSONDecodeError, KeyError, ValidationError, ProtocolError) as exc:
        return _fail(str(exc))
    return 0
