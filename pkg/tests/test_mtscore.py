import numpy as np
import pytest

from tlbench.mtscore import (
    CANONICAL_RUBRIC,
    CANONICAL_SENTENCES,
    GENERAL_SENTENCES,
    GPTScoreConfig,
    METAMORPHIC_SENTENCES,
    Rubric,
    RubricViolationError,
    ScoreParseError,
    classify_video,
    gpt_mtscore,
    gpt_mtscore_batch,
    mtscore_coarse,
    parse_rubric_reply,
    sample_frames_uniform,
)
from tlbench.types import RetrievalProfile, ValidationError

from oracles import reference_metamorphic_score

SENTENCES_SHA256 = "03cb145a9db01fd0cd039f4d48d0ad6858ad69341fe3471f3247189d8e2804fa"
RUBRIC_SHA256 = "f7313422901238c059f9e757d838506551c69320e37924aa3e0896650c63d9f2"


def profile(meta, gen):
    return RetrievalProfile(meta_probs=tuple(meta), gen_probs=tuple(gen))


def dyadic_profile(rng):
    """Ten probabilities, each an exact power of two, summing to exactly 1."""
    parts = [1.0]
    while len(parts) < 10:
        i = int(rng.integers(len(parts)))
        half = parts.pop(i) / 2.0
        parts.extend([half, half])
    return profile(meta=parts[:5], gen=parts[5:])


class TestCanonicalTexts:
    def test_sentence_spot_checks(self):
        assert GENERAL_SENTENCES[2] == "A normal video, not a time-lapse video."
        assert METAMORPHIC_SENTENCES[0] == (
            "A time-lapse video, distinct from a regular recording."
        )
        assert len(CANONICAL_SENTENCES.all_sentences()) == 10

    def test_rubric_spot_checks(self):
        assert CANONICAL_RUBRIC.levels[1].startswith("Minimal change.")
        assert CANONICAL_RUBRIC.levels[5].startswith("Dramatic change.")

    def test_frozen_checksums(self):
        # If these move, the metric definition changed; bump deliberately.
        assert CANONICAL_SENTENCES.checksum() == SENTENCES_SHA256
        assert CANONICAL_RUBRIC.checksum() == RUBRIC_SHA256

    def test_rubric_rejects_wrong_keys(self):
        with pytest.raises(ValidationError):
            Rubric(levels={1: "a", 2: "b"})


class TestCoarseScore:
    def test_symmetric_profile_is_exactly_half(self):
        assert mtscore_coarse(profile([0.1] * 5, [0.1] * 5)) == 0.5

    def test_worked_example(self):
        p = profile(meta=[0.2, 0.1, 0.05, 0.03, 0.02], gen=[0.02] * 5)
        assert mtscore_coarse(p) == pytest.approx(0.8)

    def test_all_zero_profile_is_degenerate(self):
        with pytest.raises(ValidationError, match="degenerate retrieval profile"):
            mtscore_coarse(profile([0.0] * 5, [0.0] * 5))

    def test_scale_invariance_on_dyadic_profiles(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            p = dyadic_profile(rng)
            base = mtscore_coarse(p)
            for c in (0.1, 1.0, 7.3):
                scaled = profile(
                    [c * v for v in p.meta_probs], [c * v for v in p.gen_probs]
                )
                assert mtscore_coarse(scaled) == base

    def test_complement_identity_on_dyadic_profiles(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            p = dyadic_profile(rng)
            swapped = profile(meta=p.gen_probs, gen=p.meta_probs)
            assert mtscore_coarse(swapped) == 1.0 - mtscore_coarse(p)

    def test_matches_rational_reference_on_arbitrary_profiles(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            meta = rng.random(5).tolist()
            gen = rng.random(5).tolist()
            got = mtscore_coarse(profile(meta, gen))
            assert got == reference_metamorphic_score(meta, gen)


class TestClassification:
    def test_majority_general(self):
        assert classify_video(profile(meta=[0.08] * 5, gen=[0.12] * 5)) == "general"

    def test_majority_metamorphic(self):
        assert classify_video(profile(meta=[0.12] * 5, gen=[0.08] * 5)) == "metamorphic"

    def test_exact_tie_votes_metamorphic(self):
        assert classify_video(profile(meta=[0.1] * 5, gen=[0.1] * 5)) == "metamorphic"

    def test_rejects_unnormalized_profile(self):
        with pytest.raises(ValidationError, match="normalize"):
            classify_video(profile(meta=[0.2] * 5, gen=[0.2] * 5))

    def test_agrees_with_coarse_score_threshold(self):
        rng = np.random.default_rng(14)
        for _ in range(300):
            raw = rng.random(10) + 1e-9
            raw /= raw.sum()
            p = profile(meta=raw[:5].tolist(), gen=raw[5:].tolist())
            is_general = classify_video(p) == "general"
            assert is_general == (mtscore_coarse(p) < 0.5)


class TestFrameSampling:
    def test_identity_when_counts_match(self):
        assert sample_frames_uniform(10, 10) == list(range(10))

    def test_worked_examples(self):
        assert sample_frames_uniform(100, 5) == [0, 25, 50, 74, 99]
        assert sample_frames_uniform(100, 8) == [0, 14, 28, 42, 57, 71, 85, 99]

    def test_short_video_returned_whole(self):
        assert sample_frames_uniform(3, 8) == [0, 1, 2]

    def test_empty_video_rejected(self):
        with pytest.raises(ValidationError):
            sample_frames_uniform(0, 4)
        with pytest.raises(ValidationError):
            sample_frames_uniform(10, 1)

    def test_strictly_increasing_with_endpoints(self):
        rng = np.random.default_rng(15)
        for _ in range(200):
            frame_count = int(rng.integers(2, 400))
            sample_count = int(rng.integers(2, 32))
            idx = sample_frames_uniform(frame_count, sample_count)
            assert idx[0] == 0
            assert idx[-1] == frame_count - 1
            assert all(a < b for a, b in zip(idx, idx[1:]))
            assert len(idx) == min(frame_count, sample_count)


FRAMES = [np.zeros((4, 4, 3), dtype=np.uint8)] * 3


class TestRubricScoring:
    def test_parse_plain_integer(self):
        assert parse_rubric_reply("3") == 3

    def test_parse_verbose_reply(self):
        assert parse_rubric_reply("Score: 4 - significant change.") == 4

    def test_out_of_range_is_a_rubric_violation(self):
        with pytest.raises(RubricViolationError, match="rubric violation"):
            parse_rubric_reply("6")
        with pytest.raises(RubricViolationError):
            parse_rubric_reply("I rate this -2")

    def test_no_integer_raises_parse_error(self):
        with pytest.raises(ScoreParseError):
            parse_rubric_reply("excellent")

    def test_single_shot_success(self):
        calls = []

        def backend(frames, rubric):
            calls.append(len(frames))
            return "3"

        assert gpt_mtscore(FRAMES, backend=backend) == 3
        assert calls == [3]

    def test_retries_then_succeeds(self):
        replies = iter(["hmm", "still thinking", "2"])

        def backend(frames, rubric):
            return next(replies)

        assert gpt_mtscore(FRAMES, backend=backend) == 2

    def test_exhausted_retries_raise(self):
        def backend(frames, rubric):
            return "no score here"

        cfg = GPTScoreConfig(max_retries=2)
        with pytest.raises(ScoreParseError, match="3 attempts"):
            gpt_mtscore(FRAMES, cfg=cfg, backend=backend)

    def test_backend_failure_propagates_mid_retry(self):
        replies = iter(["excellent", "excellent"])

        def backend(frames, rubric):
            try:
                return next(replies)
            except StopIteration:
                raise TimeoutError("backend gave up")

        with pytest.raises(TimeoutError):
            gpt_mtscore(FRAMES, cfg=GPTScoreConfig(max_retries=2), backend=backend)

    def test_empty_frames_rejected(self):
        with pytest.raises(ValidationError):
            gpt_mtscore([], backend=lambda f, r: "3")

    def test_batch_preserves_order(self):
        def backend(frames, rubric):
            return str(len(frames))

        frame_sets = [FRAMES[:n] for n in (1, 3, 2, 1, 3)]
        got = gpt_mtscore_batch(frame_sets, backend=backend, max_in_flight=2)
        assert got == [1, 3, 2, 1, 3]

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            GPTScoreConfig(sample_count=1)
        with pytest.raises(ValidationError):
            GPTScoreConfig(aggregation="median")
