import numpy as np
import pytest

from tlbench.types import (
    BenchmarkEntry,
    CoherenceComponents,
    EvaluationRecord,
    MissingSeries,
    RetrievalProfile,
    ValidationError,
    VisibilityMatrix,
    benchmark_entry_from_json,
    benchmark_entry_to_json,
    make_prompt_id,
    parse_retrieval_profile,
    record_from_dict,
    retrieval_payload,
    validate_visibility,
    visibility_payload,
)


class TestVisibilityMatrix:
    def test_shape_properties(self):
        vis = VisibilityMatrix(vis=np.ones((4, 9), dtype=bool), grid_size=3)
        assert vis.frames == 4
        assert vis.points == 9

    def test_rejects_float_matrix(self):
        with pytest.raises(ValidationError):
            VisibilityMatrix(vis=np.ones((2, 3)))

    def test_rejects_grid_point_mismatch(self):
        with pytest.raises(ValidationError, match="grid mismatch"):
            VisibilityMatrix(vis=np.ones((2, 8), dtype=bool), grid_size=3)

    def test_matrix_is_read_only(self):
        vis = VisibilityMatrix(vis=np.ones((2, 3), dtype=bool))
        with pytest.raises(ValueError):
            vis.vis[0, 0] = False

    def test_payload_roundtrip(self):
        vis = VisibilityMatrix(
            vis=np.array([[True, False], [False, True]]), grid_size=None
        )
        payload = visibility_payload(vis)
        back = validate_visibility(payload)
        assert np.array_equal(back.vis, vis.vis)

    def test_payload_validation_messages(self):
        with pytest.raises(ValidationError, match="empty frames"):
            validate_visibility({"frames": 0, "points": 2, "grid_size": None, "vis": []})
        with pytest.raises(ValidationError, match="dimension mismatch"):
            validate_visibility(
                {"frames": 2, "points": 2, "grid_size": None, "vis": [[True, True]]}
            )
        with pytest.raises(ValidationError, match="non-boolean entries"):
            validate_visibility(
                {"frames": 1, "points": 2, "grid_size": None, "vis": [[1, 0]]}
            )


class TestMissingSeries:
    def test_delta_must_match_difference(self):
        with pytest.raises(ValidationError):
            MissingSeries(m=np.array([0.0, 0.5]), dm=np.array([0.4]))

    def test_fractions_must_be_in_unit_interval(self):
        with pytest.raises(ValidationError):
            MissingSeries(m=np.array([0.0, 1.5]), dm=np.array([1.5]))


class TestCoherenceComponents:
    def test_total_sums_the_five_penalties(self):
        c = CoherenceComponents(
            missed_ratio=0.1,
            delta_std=0.2,
            cut_ratio=0.25,
            cut_delta_sum=0.3,
            max_delta=0.15,
            threshold=0.1,
        )
        assert c.total() == pytest.approx(1.0)
        assert set(c.as_dict()) == {
            "missed_ratio",
            "delta_std",
            "cut_ratio",
            "cut_delta_sum",
            "max_delta",
            "threshold",
        }

    def test_ratios_are_bounded(self):
        with pytest.raises(ValidationError):
            CoherenceComponents(
                missed_ratio=1.2,
                delta_std=0.0,
                cut_ratio=0.0,
                cut_delta_sum=0.0,
                max_delta=0.0,
                threshold=0.1,
            )


class TestRetrievalProfile:
    def test_normalization_flag(self):
        profile = RetrievalProfile(
            meta_probs=(0.1, 0.1, 0.1, 0.1, 0.1),
            gen_probs=(0.1, 0.1, 0.1, 0.1, 0.1),
        )
        assert profile.normalized
        scaled = RetrievalProfile(
            meta_probs=(0.2, 0.2, 0.2, 0.2, 0.2),
            gen_probs=(0.2, 0.2, 0.2, 0.2, 0.2),
        )
        assert not scaled.normalized

    def test_parse_splits_general_then_metamorphic(self):
        probs = [0.01, 0.02, 0.03, 0.04, 0.05, 0.1, 0.15, 0.2, 0.25, 0.15]
        profile = parse_retrieval_profile({"sentence_probs": probs})
        assert profile.gen_probs == tuple(probs[:5])
        assert profile.meta_probs == tuple(probs[5:])
        assert retrieval_payload(profile)["sentence_probs"] == probs

    def test_rejects_wrong_arity(self):
        with pytest.raises(ValidationError):
            parse_retrieval_profile({"sentence_probs": [0.5, 0.5]})
        with pytest.raises(ValidationError):
            RetrievalProfile(meta_probs=(), gen_probs=(0.2,) * 5)
        # Internal profiles may have any group size, but wire payloads
        # always carry exactly ten probabilities.
        lopsided = RetrievalProfile(meta_probs=(1.0,), gen_probs=(0.0,) * 5)
        with pytest.raises(ValidationError):
            retrieval_payload(lopsided)

    def test_rejects_negative_probability(self):
        with pytest.raises(ValidationError):
            RetrievalProfile(
                meta_probs=(0.5, 0.2, 0.2, 0.2, -0.1), gen_probs=(0.0,) * 5
            )


class TestBenchmarkEntry:
    def make(self, **overrides):
        fields = dict(
            prompt_id=make_prompt_id("biological", "plant growth", 3),
            prompt="A seed sprouting into a seedling over several days.",
            reference_video="plants/seed_0003.mp4",
            sub_category="plant growth",
            major_category="biological",
        )
        fields.update(overrides)
        return BenchmarkEntry(**fields)

    def test_prompt_id_slug(self):
        assert make_prompt_id("biological", "plant growth", 3) == (
            "biological-plant-growth-0003"
        )

    def test_rejects_unknown_major_category(self):
        with pytest.raises(ValidationError):
            self.make(major_category="astrological")

    def test_rejects_overlong_prompt(self):
        with pytest.raises(ValidationError):
            self.make(prompt=" ".join(["word"] * 78))

    def test_json_roundtrip(self):
        entry = self.make()
        assert benchmark_entry_from_json(benchmark_entry_to_json(entry)) == entry


class TestEvaluationRecord:
    def test_accepts_missing_metrics(self):
        record = EvaluationRecord(
            model_id="modelA",
            prompt_id="biological-plant-growth-0003",
            seed_index=1,
            chscore=None,
            mtscore=None,
            gpt4o_mtscore=None,
        )
        assert record.as_dict()["chscore"] is None

    def test_bounds(self):
        with pytest.raises(ValidationError):
            EvaluationRecord(
                model_id="m",
                prompt_id="p",
                seed_index=3,
                chscore=1.0,
                mtscore=0.5,
                gpt4o_mtscore=3.0,
            )
        with pytest.raises(ValidationError):
            EvaluationRecord(
                model_id="m",
                prompt_id="p",
                seed_index=0,
                chscore=1.0,
                mtscore=1.5,
                gpt4o_mtscore=3.0,
            )

    def test_roundtrip(self):
        record = EvaluationRecord(
            model_id="m",
            prompt_id="p",
            seed_index=0,
            chscore=2.5,
            mtscore=0.4,
            gpt4o_mtscore=4.0,
            external={"UMT-FVD": 150.0},
        )
        assert record_from_dict(record.as_dict()) == record
