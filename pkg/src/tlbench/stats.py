"""Rank correlation between automatic metrics and human ratings.

Human scores arrive on a coarse 5-point scale, so ties are the norm rather
than the exception. Kendall is therefore computed as tau-b (tie-corrected)
and Spearman as the Pearson correlation of average ranks; the familiar
squared-rank-difference shortcut only applies to tie-free data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import ValidationError


@dataclass(frozen=True)
class PairedSample:
    """Paired observations, typically (metric value, human rating)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1:
            raise ValidationError("paired sample vectors must be 1-d")
        if x.size != y.size:
            raise ValidationError("length mismatch between x and y")
        if x.size < 2:
            raise ValidationError("need at least two paired observations")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValidationError("paired sample values must be finite")
        x = x.copy()
        y = y.copy()
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)


def _pair_signs(values: np.ndarray) -> np.ndarray:
    """Sign of value[i] - value[j] for every pair i < j, flattened."""
    iu = np.triu_indices(values.size, k=1)
    return np.sign(values[:, None] - values[None, :])[iu]


def kendall_tau(sample: PairedSample) -> float:
    """Tie-corrected Kendall correlation (tau-b).

    Concordant minus discordant pairs, normalized by the geometric mean of
    the pair counts not tied in x and not tied in y respectively.
    """
    sx = _pair_signs(sample.x)
    sy = _pair_signs(sample.y)
    untied_x = int(np.count_nonzero(sx))
    untied_y = int(np.count_nonzero(sy))
    if untied_x == 0 or untied_y == 0:
        raise ValidationError("degenerate sample: a vector is entirely tied")
    net_concordant = float(np.sum(sx * sy))
    return net_concordant / math.sqrt(untied_x * untied_y)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    values = np.asarray(values, dtype=float)
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    group_rank = (starts + ends + 1) / 2.0
    return group_rank[inverse]


def spearman_rho(sample: PairedSample) -> float:
    """Pearson correlation of the average ranks of x and y."""
    rx = average_ranks(sample.x)
    ry = average_ranks(sample.y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    var_x = float(np.dot(rx, rx))
    var_y = float(np.dot(ry, ry))
    if var_x == 0.0 or var_y == 0.0:
        raise ValidationError("degenerate sample: a vector is entirely tied")
    return float(np.dot(rx, ry)) / math.sqrt(var_x * var_y)
