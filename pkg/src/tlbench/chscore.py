"""Temporal coherence scoring from point-tracking visibility dynamics.

The score is the reciprocal of five penalties accumulated from the per-frame
missed-point series: the average missed fraction, the dispersion of its
frame-to-frame deltas, the fraction of frames whose delta exceeds the
threshold, the summed over-threshold deltas, and the single largest delta.
A perfectly tracked video accumulates no penalty, so a small epsilon keeps
the reciprocal finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import CoherenceComponents, MissingSeries, ValidationError, VisibilityMatrix


@dataclass(frozen=True)
class CHScoreConfig:
    """Knobs for the coherence score.

    threshold: minimum frame-to-frame rise in missed-point fraction that
        counts as a significant break (a cut candidate).
    epsilon: added to the penalty sum so perfect videos score finitely.
    clamp_negative_max: treat an all-improving video's largest delta as 0
        instead of letting a negative value shrink the penalty sum. Disable
        for a literal reproduction of the unclamped formula.
    """

    threshold: float = 0.1
    epsilon: float = 1e-6
    clamp_negative_max: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValidationError("threshold must lie in (0, 1]")
        if not self.epsilon > 0.0:
            raise ValidationError("epsilon must be positive")


def missing_series(vis: VisibilityMatrix) -> MissingSeries:
    """Per-frame missed-point fractions and their consecutive differences.

    ``m[i]`` is the fraction of tracked points not visible in frame ``i``;
    ``dm[i] = m[i+1] - m[i]``. A single-frame video has an empty delta series.
    """
    m = 1.0 - vis.vis.mean(axis=1)
    return MissingSeries(m=m, dm=np.diff(m))


def coherence_components(
    series: MissingSeries, cfg: CHScoreConfig = CHScoreConfig()
) -> CoherenceComponents:
    """Reduce a missed-point series to the five incoherence penalties.

    For a single frame there are no deltas, so every delta-derived component
    is zero and only the missed-point average survives.
    """
    m, dm = series.m, series.dm
    frames = m.size
    missed_ratio = float(np.mean(m))
    if dm.size == 0:
        return CoherenceComponents(
            missed_ratio=missed_ratio,
            delta_std=0.0,
            cut_ratio=0.0,
            cut_delta_sum=0.0,
            max_delta=0.0,
            threshold=cfg.threshold,
        )
    delta_std = float(np.std(dm))
    over = dm > cfg.threshold
    cut_ratio = float(np.count_nonzero(over)) / frames
    cut_delta_sum = float(np.sum(dm[over]))
    max_delta = float(np.max(dm))
    if cfg.clamp_negative_max and max_delta < 0.0:
        max_delta = 0.0
    return CoherenceComponents(
        missed_ratio=missed_ratio,
        delta_std=delta_std,
        cut_ratio=cut_ratio,
        cut_delta_sum=cut_delta_sum,
        max_delta=max_delta,
        threshold=cfg.threshold,
    )


def chscore(
    components: CoherenceComponents, cfg: CHScoreConfig = CHScoreConfig()
) -> float:
    """Coherence score: reciprocal of the penalty sum plus epsilon."""
    return 1.0 / (components.total() + cfg.epsilon)


def chscore_from_visibility(
    vis: VisibilityMatrix, cfg: CHScoreConfig = CHScoreConfig()
) -> tuple[float, CoherenceComponents, MissingSeries]:
    """Full pipeline from a visibility matrix; intermediates are returned
    so reports can show where the penalty mass came from."""
    series = missing_series(vis)
    components = coherence_components(series, cfg)
    return chscore(components, cfg), components, series
