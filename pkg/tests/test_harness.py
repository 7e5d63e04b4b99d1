import json
import shutil
import sys
from pathlib import Path

import numpy as np
import pytest

from tlbench.harness import (
    EvaluationFailure,
    Leaderboard,
    MetricSettings,
    RunManifest,
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
from tlbench.curation import FrameSequence, save_frame_payload
from tlbench.mtscore import CANONICAL_RUBRIC, CANONICAL_SENTENCES
from tlbench.protocol import BackendClient, StdioEndpoint
from tlbench.types import (
    BenchmarkEntry,
    EvaluationRecord,
    ValidationError,
    make_prompt_id,
)

FIXTURE = Path(__file__).parent / "data" / "bench_fixture"
BENCH = FIXTURE / "bench.jsonl"
RUNS = FIXTURE / "runs"


def fixture_bench():
    return load_benchmark(BENCH)


def record(model, prompt, seed, ch=None, mt=None, gpt=None):
    return EvaluationRecord(
        model_id=model,
        prompt_id=prompt,
        seed_index=seed,
        chscore=ch,
        mtscore=mt,
        gpt4o_mtscore=gpt,
    )


class TestRunManifest:
    def test_discovery_layout(self):
        run = discover_run_root(RUNS / "modelA")
        assert run.model_id == "modelA"
        assert len(run.videos) == 4
        for paths in run.videos.values():
            assert len(paths) == 3
            assert [Path(p).name for p in paths] == [
                "seed_0.mp4",
                "seed_1.mp4",
                "seed_2.mp4",
            ]

    def test_model_id_override(self):
        run = discover_run_root(RUNS / "modelA", model_id="renamed")
        assert run.model_id == "renamed"

    def test_sidecars_are_not_videos(self):
        run = discover_run_root(RUNS / "modelA")
        for paths in run.videos.values():
            assert not any(p.endswith(".json") for p in paths)

    def test_rejects_too_many_seeds(self):
        with pytest.raises(ValidationError):
            RunManifest(model_id="m", videos={"p": ("a", "b", "c", "d")})

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            RunManifest(model_id="m", videos={})


class TestLoadBenchmark:
    def test_fixture_loads(self):
        entries = fixture_bench()
        assert len(entries) == 4
        assert entries[0].prompt_id == "biological-flower-bloom-0001"

    def test_duplicate_id_rejected(self, tmp_path):
        entries = fixture_bench()
        path = tmp_path / "bench.jsonl"
        save_benchmark(path, [entries[0], entries[0]])
        with pytest.raises(ValidationError, match="duplicate"):
            load_benchmark(path)

    def test_bad_category_rejected(self, tmp_path):
        line = json.dumps(
            {
                "prompt_id": "cosmic-stars-0001",
                "prompt": "stars drifting",
                "reference_video": "x.mp4",
                "sub_category": "stars",
                "major_category": "cosmic",
            }
        )
        path = tmp_path / "bench.jsonl"
        path.write_text(line + "\n")
        with pytest.raises(ValidationError):
            load_benchmark(path)


def synthetic_bench(sub_count=75, per_sub=3):
    entries = []
    majors = ["biological", "human-created", "meteorological", "physical"]
    for s in range(sub_count):
        major = majors[s % 4]
        sub = f"process {s:02d}"
        for i in range(1, per_sub + 1):
            entries.append(
                BenchmarkEntry(
                    prompt_id=make_prompt_id(major, sub, i),
                    prompt=f"synthetic prompt {s}-{i}",
                    reference_video=f"ref/{s}_{i}.mp4",
                    sub_category=sub,
                    major_category=major,
                )
            )
    return entries


class TestSubset150:
    def selection_for(self, entries, per_sub=2):
        picked = {}
        ids = []
        for e in entries:
            picked.setdefault(e.sub_category, 0)
            if picked[e.sub_category] < per_sub:
                picked[e.sub_category] += 1
                ids.append(e.prompt_id)
        return ids

    def test_valid_selection(self, tmp_path):
        entries = synthetic_bench()
        ids = self.selection_for(entries)
        path = tmp_path / "bench150.txt"
        path.write_text("\n".join(reversed(ids)) + "\n")
        subset = subset_bench150(entries, path)
        assert len(subset) == 150
        # Order follows the manifest even though the file was reversed.
        positions = {e.prompt_id: i for i, e in enumerate(entries)}
        assert [positions[e.prompt_id] for e in subset] == sorted(
            positions[e.prompt_id] for e in subset
        )

    def test_wrong_total_rejected(self, tmp_path):
        entries = synthetic_bench()
        ids = self.selection_for(entries)[:-1]
        path = tmp_path / "sel.txt"
        path.write_text("\n".join(ids) + "\n")
        with pytest.raises(ValidationError, match="expected exactly 150"):
            subset_bench150(entries, path)

    def test_three_in_one_category_rejected(self, tmp_path):
        entries = synthetic_bench()
        ids = self.selection_for(entries)
        # Swap one id from the last sub-category for a third pick from the
        # first, keeping the total at 150.
        first_sub = entries[0].sub_category
        third = next(
            e.prompt_id
            for e in entries
            if e.sub_category == first_sub and e.prompt_id not in ids
        )
        ids[-1] = third
        path = tmp_path / "sel.txt"
        path.write_text("\n".join(ids) + "\n")
        with pytest.raises(ValidationError, match="exactly 2"):
            subset_bench150(entries, path)

    def test_unknown_id_rejected(self, tmp_path):
        entries = synthetic_bench()
        ids = self.selection_for(entries)
        ids[0] = "biological-missing-9999"
        path = tmp_path / "sel.txt"
        path.write_text("\n".join(ids) + "\n")
        with pytest.raises(ValidationError, match="missing from manifest"):
            subset_bench150(entries, path)

    def test_empty_selection_rejected(self, tmp_path):
        path = tmp_path / "sel.txt"
        path.write_text("\n")
        with pytest.raises(ValidationError):
            subset_bench150(synthetic_bench(), path)


class TestEvaluateRun:
    def settings(self, *metrics, workers=1):
        return MetricSettings(metrics=tuple(metrics), workers=workers)

    def test_fixture_run_full_coverage(self):
        run = discover_run_root(RUNS / "modelA")
        result = evaluate_run(
            run,
            fixture_bench(),
            SidecarBackend(),
            self.settings("chscore", "mtscore", "gpt4o_mtscore"),
        )
        assert len(result.records) == 12
        assert result.failures == ()
        for r in result.records:
            assert r.chscore is not None and r.chscore > 0
            assert r.mtscore is not None and 0 <= r.mtscore <= 1
            assert r.gpt4o_mtscore in (2.0, 3.0, 4.0)

    def test_records_are_ordered(self):
        run = discover_run_root(RUNS / "modelB")
        result = evaluate_run(run, fixture_bench(), SidecarBackend())
        keys = [(r.prompt_id, r.seed_index) for r in result.records]
        assert keys == sorted(keys)

    def test_worker_pool_matches_serial(self):
        run = discover_run_root(RUNS / "modelA")
        serial = evaluate_run(
            run, fixture_bench(), SidecarBackend(), self.settings("chscore")
        )
        threaded = evaluate_run(
            run,
            fixture_bench(),
            SidecarBackend(),
            self.settings("chscore", workers=4),
        )
        assert serial.records == threaded.records

    def test_one_unreadable_video_isolated(self, tmp_path):
        src = RUNS / "modelA"
        dst = tmp_path / "modelA"
        shutil.copytree(src, dst)
        # Keep two prompts, drop the rest; break one video's sidecar.
        kept = ["biological-flower-bloom-0001", "biological-plant-growth-0002"]
        for p in dst.iterdir():
            if p.name not in kept:
                shutil.rmtree(p)
        (dst / kept[0] / "seed_1.vis.json").unlink()
        run = discover_run_root(dst)
        result = evaluate_run(
            run, fixture_bench(), SidecarBackend(), self.settings("chscore")
        )
        assert len(result.records) == 5
        assert len(result.failures) == 1
        failure = result.failures[0]
        assert (failure.prompt_id, failure.seed_index) == (kept[0], 1)
        assert failure.metric == "chscore"

    def test_partial_metric_failure_keeps_record(self, tmp_path):
        src = RUNS / "modelA"
        dst = tmp_path / "modelA"
        shutil.copytree(src, dst)
        broken = dst / "biological-flower-bloom-0001" / "seed_0.retrieval.json"
        broken.unlink()
        run = discover_run_root(dst)
        result = evaluate_run(
            run, fixture_bench(), SidecarBackend(), self.settings("chscore", "mtscore")
        )
        assert len(result.records) == 12
        assert len(result.failures) == 1
        hit = next(
            r
            for r in result.records
            if r.prompt_id == "biological-flower-bloom-0001" and r.seed_index == 0
        )
        assert hit.mtscore is None
        assert hit.chscore is not None

    def test_unknown_prompt_rejected(self):
        run = RunManifest(model_id="m", videos={"weird-prompt-0001": ("a.mp4",)})
        with pytest.raises(ValidationError, match="absent from the benchmark"):
            evaluate_run(run, fixture_bench(), SidecarBackend())

    def test_zero_evaluable_videos_is_an_error(self, tmp_path):
        pdir = tmp_path / "modelX" / "biological-flower-bloom-0001"
        pdir.mkdir(parents=True)
        (pdir / "seed_0.mp4").write_bytes(b"x")
        run = discover_run_root(tmp_path / "modelX")
        with pytest.raises(ValidationError, match="zero evaluable"):
            evaluate_run(run, fixture_bench(), SidecarBackend(), self.settings("chscore"))


class TestWireBackend:
    def test_end_to_end_against_stub(self, tmp_path):
        bench = fixture_bench()
        prompt_id = bench[0].prompt_id
        pdir = tmp_path / "stubmodel" / prompt_id
        pdir.mkdir(parents=True)
        frames = np.zeros((9, 4, 4, 3), dtype=np.uint8)
        save_frame_payload(pdir / "seed_0.frames", FrameSequence(frames=frames))
        run = discover_run_root(tmp_path / "stubmodel")
        with StdioEndpoint(
            [sys.executable, "-m", "tlbench.stub_backend"], timeout=20.0
        ) as ep:
            client = BackendClient(
                endpoint=ep,
                sentences_checksum=CANONICAL_SENTENCES.checksum(),
                rubric_checksum=CANONICAL_RUBRIC.checksum(),
            )
            result = evaluate_run(
                run,
                bench,
                WireBackend(client),
                MetricSettings(metrics=("chscore", "mtscore", "gpt4o_mtscore")),
            )
        assert len(result.records) == 1
        r = result.records[0]
        # Stub tracker sees everything, so the penalty total is 0 + epsilon.
        assert r.chscore == pytest.approx(1e6)
        assert r.mtscore == pytest.approx(0.75)
        assert r.gpt4o_mtscore == 3.0
        assert result.failures == ()


class TestAggregate:
    def test_simple_mean(self):
        bench = fixture_bench()
        pid = bench[0].prompt_id
        records = [record("m", pid, s, ch=float(s + 1)) for s in range(3)]
        board = aggregate(records, bench)
        assert board.row("m").overall["chscore"] == pytest.approx(2.0)
        assert board.row("m").overall_counts["chscore"] == 3

    def test_missing_metric_stays_none(self):
        bench = fixture_bench()
        records = [record("m", bench[0].prompt_id, 0, ch=1.5)]
        row = aggregate(records, bench).row("m")
        assert row.overall["mtscore"] is None
        assert row.overall_counts["mtscore"] == 0

    def test_per_category_grouping(self):
        bench = fixture_bench()
        bio = bench[0].prompt_id
        met = "meteorological-cloud-motion-0001"
        records = [
            record("m", bio, 0, ch=2.0),
            record("m", met, 0, ch=4.0),
        ]
        row = aggregate(records, bench).row("m")
        assert row.per_category["biological"]["chscore"] == pytest.approx(2.0)
        assert row.per_category["meteorological"]["chscore"] == pytest.approx(4.0)
        assert row.per_category["physical"]["chscore"] is None
        assert row.overall["chscore"] == pytest.approx(3.0)

    def test_linearity_overall_is_count_weighted_category_mean(self):
        rng = np.random.default_rng(51)
        bench = fixture_bench()
        records = []
        for e in bench:
            for s in range(3):
                if rng.random() < 0.2:
                    continue
                records.append(record("m", e.prompt_id, s, ch=float(rng.uniform(1, 9))))
        row = aggregate(records, bench).row("m")
        total = 0.0
        count = 0
        for category, means in row.per_category.items():
            n = row.category_counts[category]["chscore"]
            if n:
                total += means["chscore"] * n
                count += n
        assert row.overall["chscore"] == pytest.approx(total / count)
        assert row.overall_counts["chscore"] == count

    def test_external_passthrough(self):
        bench = fixture_bench()
        external = load_external_csv(FIXTURE / "external.csv")
        records = [record("modelA", bench[0].prompt_id, 0, ch=1.0)]
        board = aggregate(records, bench, external=external)
        assert board.row("modelA").external["UMT-FVD"] == pytest.approx(181.4)
        # modelB has no records at all but still gets a row.
        row_b = board.row("modelB")
        assert row_b.overall["chscore"] is None
        assert row_b.external["UMTScore"] == pytest.approx(2.31)

    def test_unknown_prompt_rejected(self):
        with pytest.raises(ValidationError):
            aggregate([record("m", "nope-0001", 0, ch=1.0)], fixture_bench())

    def test_argsort_invariance_under_scaling(self):
        bench = fixture_bench()
        models = [f"model{i}" for i in range(5)]
        rng = np.random.default_rng(52)
        base, scaled = [], []
        for m in models:
            for e in bench:
                ch = float(rng.uniform(0.5, 30.0))
                base.append(record(m, e.prompt_id, 0, ch=ch))
                scaled.append(record(m, e.prompt_id, 0, ch=7.3 * ch))
        col = lambda board: np.array(
            [board.row(m).overall["chscore"] for m in models]
        )
        order_base = np.argsort(col(aggregate(base, bench)))
        order_scaled = np.argsort(col(aggregate(scaled, bench)))
        assert np.array_equal(order_base, order_scaled)


class TestCorrelate:
    def test_perfect_agreement(self):
        metric = {"a": 1.0, "b": 2.0, "c": 3.0}
        human = {"a": 1.0, "b": 2.0, "c": 3.0}
        assert correlate(metric, human) == (1.0, 1.0)

    def test_one_swap(self):
        metric = {"a": 1.0, "b": 2.0, "c": 3.0}
        human = {"a": 1.0, "b": 3.0, "c": 2.0}
        tau, rho = correlate(metric, human)
        assert tau == 1 / 3
        assert rho == 0.5

    def test_single_overlap_rejected(self):
        with pytest.raises(ValidationError, match="at least 2"):
            correlate({"a": 1.0, "b": 2.0}, {"b": 5.0, "z": 1.0})

    def test_human_csv_loader(self):
        ratings = load_human_csv(FIXTURE / "human.csv")
        assert ratings == {"modelA": 3.4, "modelB": 2.1}


class TestReports:
    def full_run(self, model):
        run = discover_run_root(RUNS / model)
        return evaluate_run(
            run,
            fixture_bench(),
            SidecarBackend(),
            MetricSettings(metrics=("chscore", "mtscore", "gpt4o_mtscore")),
        )

    def test_repeat_runs_identical_modulo_timestamp(self):
        bench = fixture_bench()
        docs = []
        for _ in range(2):
            results = [self.full_run("modelA"), self.full_run("modelB")]
            board = aggregate(
                [r for res in results for r in res.records],
                bench,
                external=load_external_csv(FIXTURE / "external.csv"),
            )
            docs.append(report_document(board, results, bench))
        for doc in docs:
            assert doc.pop("generated_at")
        assert docs[0] == docs[1]

    def test_json_roundtrip(self, tmp_path):
        result = self.full_run("modelA")
        board = aggregate(result.records, fixture_bench())
        doc = report_document(board, [result], fixture_bench())
        path = tmp_path / "report.json"
        write_report_json(path, doc)
        assert load_report_json(path) == doc

    def test_markdown_table_shape(self):
        result = self.full_run("modelA")
        board = aggregate(
            result.records,
            fixture_bench(),
            external=load_external_csv(FIXTURE / "external.csv"),
        )
        text = render_markdown(board)
        lines = text.strip().splitlines()
        assert lines[0] == (
            "| Model | UMT-FVD↓ | UMTScore↑ | MTScore↑ | CHScore↑ "
            "| GPT4o-MTScore↑ |"
        )
        assert lines[2].startswith("| modelA |")
        # modelB appears via the external CSV even without records.
        assert any(line.startswith("| modelB |") for line in lines)

    def test_csv_report(self, tmp_path):
        import csv as csvmod

        result = self.full_run("modelA")
        board = aggregate(result.records, fixture_bench())
        path = tmp_path / "report.csv"
        write_report_csv(path, board)
        with open(path, newline="") as fh:
            rows = list(csvmod.DictReader(fh))
        scopes = [r["scope"] for r in rows if r["model_id"] == "modelA"]
        assert scopes == [
            "overall",
            "biological",
            "human-created",
            "meteorological",
            "physical",
        ]
        overall = rows[0]
        assert float(overall["chscore"]) > 0
        assert overall["chscore_count"] == "12"

    def test_failures_are_rows_in_the_document(self, tmp_path):
        src = RUNS / "modelA"
        dst = tmp_path / "modelA"
        shutil.copytree(src, dst)
        (dst / "biological-flower-bloom-0001" / "seed_0.vis.json").unlink()
        run = discover_run_root(dst)
        result = evaluate_run(
            run,
            fixture_bench(),
            SidecarBackend(),
            MetricSettings(metrics=("chscore", "mtscore")),
        )
        doc = report_document(
            aggregate(result.records, fixture_bench()), [result], fixture_bench()
        )
        assert len(doc["failures"]["modelA"]) == 1
        assert doc["failures"]["modelA"][0]["metric"] == "chscore"
