"""Metrics and benchmark harness for time-lapse text-to-video generation.

The toolkit measures two things a time-lapse generator must get right:
staying temporally coherent (chscore) and actually showing large state
change rather than gentle camera drift (mtscore, coarse and rubric-based).
Around the metrics sit the data-curation pipeline, rank-correlation stats
for human-alignment studies, the benchmark harness, and the wire protocol
that keeps neural model hosting out of process.
"""

from .chscore import (
    CHScoreConfig,
    chscore,
    chscore_from_visibility,
    coherence_components,
    missing_series,
)
from .curation import (
    ClipBoundary,
    ClipFeature,
    FrameSequence,
    caption_clip,
    filter_metamorphic,
    frame_diff_series,
    load_frames,
    merge_similar_clips,
    save_frame_payload,
    split_on_transitions,
    split_sequence,
)
from .harness import (
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
    render_markdown,
    report_document,
    subset_bench150,
)
from .mtscore import (
    CANONICAL_RUBRIC,
    CANONICAL_SENTENCES,
    GPTScoreConfig,
    Rubric,
    RetrievalSentenceSet,
    classify_video,
    gpt_mtscore,
    mtscore_coarse,
    sample_frames_uniform,
)
from .protocol import (
    BackendClient,
    HttpEndpoint,
    StdioEndpoint,
    roundtrip,
)
from .stats import PairedSample, kendall_tau, spearman_rho
from .types import (
    BenchmarkEntry,
    CoherenceComponents,
    EvaluationRecord,
    MissingSeries,
    RetrievalProfile,
    ValidationError,
    VisibilityMatrix,
)

__version__ = "0.1.0"
