"""Model backends served over the tlbench wire protocol."""

from .canon import (
    CanonDriftError,
    EXPECTED_RUBRIC_SHA256,
    EXPECTED_SENTENCES_SHA256,
    GENERAL_SENTENCES,
    METAMORPHIC_SENTENCES,
    RUBRIC_LEVELS,
    rubric_checksum,
    sentences_checksum,
    verify_canon,
)
from .frames import VideoReadError, load_video, to_gray
from .models import (
    ChangeRubricGrader,
    InferenceError,
    LucasKanadeTracker,
    MotionRetriever,
    StubCaptioner,
    StubRetriever,
    StubRubricGrader,
    StubTracker,
    TemplateCaptioner,
    motion_statistics,
)
from .service import (
    AdapterConfig,
    AdapterService,
    StartupError,
    make_http_server,
    serve_http,
    serve_stdio,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterService",
    "CanonDriftError",
    "ChangeRubricGrader",
    "EXPECTED_RUBRIC_SHA256",
    "EXPECTED_SENTENCES_SHA256",
    "GENERAL_SENTENCES",
    "InferenceError",
    "LucasKanadeTracker",
    "METAMORPHIC_SENTENCES",
    "MotionRetriever",
    "RUBRIC_LEVELS",
    "StartupError",
    "StubCaptioner",
    "StubRetriever",
    "StubRubricGrader",
    "StubTracker",
    "TemplateCaptioner",
    "VideoReadError",
    "load_video",
    "make_http_server",
    "motion_statistics",
    "rubric_checksum",
    "sentences_checksum",
    "serve_http",
    "serve_stdio",
    "to_gray",
    "verify_canon",
]
