"""The models behind each request kind, plus their deterministic stubs.

Nothing here is neural. The tracker is pyramidal Lucas-Kanade optical flow
with a forward-backward consistency check; retrieval maps motion
statistics onto the ten canonical sentences through a softmax; captions
come from a template over frame statistics; the rubric grade buckets the
measured change magnitude. They are honest models of the quantities the
metrics need, small enough to run anywhere, and every one of them has a
stub twin so protocol tests need no inference at all.
"""

from __future__ import annotations

import numpy as np

from .canon import GENERAL_SENTENCES, METAMORPHIC_SENTENCES


class InferenceError(RuntimeError):
    """A model could not produce an answer for this input."""


class LucasKanadeTracker:
    """Grid-point visibility from LK optical flow.

    Points are seeded as a grid_size x grid_size lattice on the first
    frame, inset from the border, then chased frame to frame. A point
    counts as visible when either signal clears the confidence threshold:

      * flow confidence: forward and backward LK both succeed, the
        round trip lands within fb_max_px of where it started, the new
        position is inside the frame, and the matched window actually
        resembles the original (LK's residual stays small; on content
        that churns every frame the round trip can pass by luck while
        the residual gives it away);
      * patch confidence: the window around the point has next to no
        texture AND barely changed. Gradient-based flow is blind on flat
        regions, so status=0 there carries no evidence of loss; an
        unchanged flat patch is a point still sitting where it was. The
        texture gate matters: without it, a slowly sliding textured
        scene would keep "visible" points that in truth left the frame.

    Confidences are squashed to [0, 1] and thresholded at vis_threshold
    (0.5 unless configured otherwise) before booleans leave this class.
    """

    def __init__(
        self,
        vis_threshold: float = 0.5,
        fb_max_px: float = 1.0,
        win_size: int = 15,
        max_level: int = 2,
        margin: float = 0.04,
        patch: int = 7,
        batch_size: int = 4096,
    ):
        try:
            import cv2
        except ImportError as exc:  # pragma: no cover - environment specific
            raise InferenceError(f"tracker backend unavailable: {exc}") from exc
        if not 0.0 < vis_threshold <= 1.0:
            raise InferenceError("vis_threshold must lie in (0, 1]")
        if fb_max_px <= 0 or patch < 3 or patch % 2 == 0:
            raise InferenceError("bad tracker geometry settings")
        self._cv2 = cv2
        self.vis_threshold = float(vis_threshold)
        self.fb_max_px = float(fb_max_px)
        self.win_size = int(win_size)
        self.max_level = int(max_level)
        self.margin = float(margin)
        self.patch = int(patch)
        self.batch_size = max(1, int(batch_size))

    def seed_grid(self, height: int, width: int, grid_size: int) -> np.ndarray:
        inset_y = max(1.0, self.margin * height)
        inset_x = max(1.0, self.margin * width)
        ys = np.linspace(inset_y, height - 1 - inset_y, grid_size)
        xs = np.linspace(inset_x, width - 1 - inset_x, grid_size)
        pts = [(x, y) for y in ys for x in xs]
        return np.array(pts, dtype=np.float32).reshape(-1, 1, 2)

    def _patch_stats(self, prev: np.ndarray, cur: np.ndarray, pts: np.ndarray):
        """Per point: mean absolute change of a small window, and how much
        texture the window had to begin with (both in 0..1 units)."""
        half = self.patch // 2
        height, width = prev.shape
        change = np.empty(len(pts), dtype=np.float64)
        texture = np.empty(len(pts), dtype=np.float64)
        for i, (x, y) in enumerate(pts.reshape(-1, 2)):
            cx = min(max(int(round(x)), half), width - 1 - half)
            cy = min(max(int(round(y)), half), height - 1 - half)
            a = prev[cy - half : cy + half + 1, cx - half : cx + half + 1]
            b = cur[cy - half : cy + half + 1, cx - half : cx + half + 1]
            change[i] = np.abs(b.astype(np.int16) - a.astype(np.int16)).mean() / 255.0
            texture[i] = a.std() / 255.0
        return change, texture

    def _step(self, prev: np.ndarray, cur: np.ndarray, pts: np.ndarray):
        cv2 = self._cv2
        lk = dict(winSize=(self.win_size, self.win_size), maxLevel=self.max_level)
        fwd, st_f, err = cv2.calcOpticalFlowPyrLK(prev, cur, pts, None, **lk)
        back, st_b, _ = cv2.calcOpticalFlowPyrLK(cur, prev, fwd, None, **lk)
        fb = np.linalg.norm((back - pts).reshape(-1, 2), axis=1)
        height, width = cur.shape
        xy = fwd.reshape(-1, 2)
        inside = (
            (xy[:, 0] >= 0)
            & (xy[:, 0] <= width - 1)
            & (xy[:, 1] >= 0)
            & (xy[:, 1] <= height - 1)
        )
        flow_ok = (st_f.ravel() == 1) & (st_b.ravel() == 1) & inside
        # fb = 0 is full confidence, fb = fb_max_px sits exactly at 0.5.
        conf_round_trip = np.clip(1.0 - fb / (2.0 * self.fb_max_px), 0.0, 1.0)
        # err is the mean window residual in gray levels; ~20 means the
        # matched patch no longer looks like what we started following.
        conf_match = np.clip(1.0 - err.ravel() / 20.0, 0.0, 1.0)
        conf_flow = np.where(flow_ok, np.minimum(conf_round_trip, conf_match), 0.0)
        change, texture = self._patch_stats(prev, cur, pts)
        flat = texture < 0.03
        conf_patch = np.where(flat, np.clip(1.0 - change / 0.04, 0.0, 1.0), 0.0)
        conf = np.maximum(conf_flow, conf_patch)
        new_pts = np.where(flow_ok[:, None, None], fwd, pts).astype(np.float32)
        return conf, new_pts

    def track(self, gray_frames: np.ndarray, grid_size: int) -> np.ndarray:
        if gray_frames.ndim != 3:
            raise InferenceError("tracker expects (frames, height, width) input")
        frame_count, height, width = gray_frames.shape
        if min(height, width) < 2 * self.patch:
            raise InferenceError(
                f"frames of {height}x{width} are too small to track"
            )
        points = grid_size * grid_size
        vis = np.zeros((frame_count, points), dtype=bool)
        vis[0] = True  # seeded points are visible by construction
        pts = self.seed_grid(height, width, grid_size)
        for t in range(1, frame_count):
            prev, cur = gray_frames[t - 1], gray_frames[t]
            confs = []
            updated = []
            for lo in range(0, points, self.batch_size):
                chunk = pts[lo : lo + self.batch_size]
                conf, new_chunk = self._step(prev, cur, chunk)
                confs.append(conf)
                updated.append(new_chunk)
            conf = np.concatenate(confs)
            pts = np.concatenate(updated)
            vis[t] = conf >= self.vis_threshold
        return vis


class StubTracker:
    """Everything visible, two frames, no inference."""

    def track(self, gray_frames: np.ndarray, grid_size: int) -> np.ndarray:
        return np.ones((2, grid_size * grid_size), dtype=bool)


def _normalized_gray(frames: np.ndarray) -> np.ndarray:
    if frames.shape[-1] == 1:
        gray = frames[..., 0]
    else:
        gray = frames.mean(axis=-1)
    return gray.astype(np.float64) / 255.0


def motion_statistics(frames: np.ndarray) -> dict[str, float]:
    """Three scalars describing how much, and how directionally, a video
    changes: the mean per-step change, the first-to-last change, and the
    ratio of the two (near 1 for steady progression, near 0 for jitter
    that goes nowhere)."""
    gray = _normalized_gray(frames)
    if gray.shape[0] < 2:
        return {"step": 0.0, "span": 0.0, "drift": 0.0}
    steps = np.abs(np.diff(gray, axis=0)).mean(axis=(1, 2))
    span = float(np.abs(gray[-1] - gray[0]).mean())
    path = float(steps.sum())
    drift = 0.0 if path <= 1e-9 else min(1.0, span / path)
    return {"step": float(steps.mean()), "span": span, "drift": drift}


class MotionRetriever:
    """Scores the ten canonical sentences from motion statistics.

    Evidence for the time-lapse reading combines the long-range change
    with its directionality; the ordinary-video reading gets the
    complement. Per-sentence affinities keep the ten logits from forming
    two flat plateaus, and a softmax (temperature configurable, the right
    value being an open calibration question) turns them into the
    normalized probabilities the protocol promises.
    """

    GENERAL_AFFINITY = np.array([1.05, 0.95, 1.10, 1.00, 0.90])
    META_AFFINITY = np.array([1.10, 1.00, 0.95, 1.05, 0.90])
    # How the two motion statistics blend into time-lapse evidence. Span
    # dominates: a clip that ends far from where it started is the
    # defining trait, steady directionality is corroboration.
    SPAN_WEIGHT = 0.55
    DRIFT_WEIGHT = 0.25

    def __init__(self, temperature: float = 1.0, span_scale: float = 0.35):
        if temperature <= 0 or span_scale <= 0:
            raise InferenceError("temperature and span_scale must be positive")
        self.temperature = float(temperature)
        self.span_scale = float(span_scale)

    def sentences(self) -> tuple[str, ...]:
        return GENERAL_SENTENCES + METAMORPHIC_SENTENCES

    def probabilities(self, frames: np.ndarray) -> list[float]:
        stats = motion_statistics(frames)
        meta_evidence = self.SPAN_WEIGHT * min(1.0, stats["span"] / self.span_scale)
        meta_evidence += self.DRIFT_WEIGHT * stats["drift"]
        gen_evidence = 1.0 - meta_evidence
        logits = np.concatenate(
            [gen_evidence * self.GENERAL_AFFINITY, meta_evidence * self.META_AFFINITY]
        )
        logits = logits / self.temperature
        logits -= logits.max()
        weights = np.exp(logits)
        probs = weights / weights.sum()
        return [float(p) for p in probs]


class StubRetriever:
    PROFILE = [0.06] * 5 + [0.14] * 5

    def probabilities(self, frames: np.ndarray) -> list[float]:
        return list(self.PROFILE)


_BRIGHTNESS_WORDS = ((0.25, "dark"), (0.55, "dim"), (0.8, "bright"))


def _brightness_word(value: float) -> str:
    for cutoff, word in _BRIGHTNESS_WORDS:
        if value < cutoff:
            return word
    return "very bright"


class TemplateCaptioner:
    """Deterministic captions from frame statistics.

    A language model would describe content; this one describes what it can
    measure (brightness, tint, how far into the clip the frame sits), which
    is enough for the curation plumbing and for tests to assert on.
    """

    def caption(self, frames: np.ndarray, frame_index: int) -> str:
        if frame_index >= frames.shape[0]:
            raise InferenceError(
                f"frame index {frame_index} outside a {frames.shape[0]}-frame clip"
            )
        frame = frames[frame_index].astype(np.float64) / 255.0
        brightness = float(frame.mean())
        tint = ""
        if frames.shape[-1] == 3:
            means = frame.mean(axis=(0, 1))
            lead = int(np.argmax(means))
            rest = (means.sum() - means[lead]) / 2.0
            # argmax alone would call a perfectly gray frame red-leaning.
            if means[lead] - rest > 0.02:
                channel = ("red", "green", "blue")[lead]
                tint = f", {channel}-leaning"
        return (
            f"frame {frame_index}: {_brightness_word(brightness)} scene"
            f"{tint}, mean brightness {brightness:.2f}"
        )

    def summarize(self, pairs: list[tuple[int, str]]) -> str:
        ordered = sorted(pairs)
        body = "; ".join(f"({pos}) {text}" for pos, text in ordered)
        return f"sequence of {len(ordered)} stages: {body}"


class StubCaptioner:
    def caption(self, frames: np.ndarray, frame_index: int) -> str:
        return f"stub caption for frame {frame_index}"

    def summarize(self, pairs: list[tuple[int, str]]) -> str:
        body = "; ".join(f"{pos}: {text}" for pos, text in sorted(pairs))
        return f"stub summary of {body}"


class ChangeRubricGrader:
    """Five-level change grade from measured change magnitude.

    The level cutoffs are calibrated so an unchanging clip grades 1 and a
    full black-to-white sweep grades 5; between those anchors they are
    spaced to make each level reachable by plausible synthetic content.
    """

    CUTOFFS = (0.015, 0.05, 0.12, 0.25)
    NAMES = {1: "minimal", 2: "slight", 3: "moderate", 4: "significant", 5: "dramatic"}

    def grade(self, frames: np.ndarray, frame_indices: list[int]) -> str:
        sampled = _normalized_gray(frames[frame_indices])
        if sampled.shape[0] < 2:
            magnitude = 0.0
        else:
            span = float(np.abs(sampled[-1] - sampled[0]).mean())
            steps = float(np.abs(np.diff(sampled, axis=0)).mean())
            magnitude = 0.5 * span + 0.5 * steps
        level = 1
        for cutoff in self.CUTOFFS:
            if magnitude >= cutoff:
                level += 1
        return f"{level} ({self.NAMES[level]} change)"


class StubRubricGrader:
    def __init__(self, reply: str = "5"):
        self.reply = reply

    def grade(self, frames: np.ndarray, frame_indices: list[int]) -> str:
        return self.reply
