"""Shared synthetic clips for the adapter tests.

Every generator is deterministic (fixed seed per clip) so the scores the
classical models produce on them are stable across runs. The clips are
small on purpose: 24 frames of 48x64 keep the whole suite in seconds.
"""

import struct

import numpy as np
import pytest

FRAMES, HEIGHT, WIDTH = 24, 48, 64


def _blurred_texture(rng, h, w, lo=40, hi=200):
    import cv2

    tex = rng.uniform(lo, hi, size=(h, w)).astype(np.float32)
    return cv2.GaussianBlur(tex, (5, 5), 1.5)


def _to_rgb(gray_stack):
    g = np.clip(gray_stack, 0, 255).astype(np.uint8)
    return np.stack([g, g, g], axis=-1)


def make_growth_clip():
    """A patch of bright churning material spreads over a textured
    background; whatever it covers is gone for the tracker."""
    rng = np.random.default_rng(101)
    tex = _blurred_texture(rng, HEIGHT, WIDTH)
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    out = []
    for t in range(FRAMES):
        r = 3.0 + 11.0 * t / (FRAMES - 1)
        mask = (yy - HEIGHT / 2) ** 2 + (xx - WIDTH / 2) ** 2 <= r * r
        f = tex.copy()
        f[mask] = rng.uniform(190, 255, size=int(mask.sum()))
        out.append(f)
    return _to_rgb(np.stack(out))


def make_pan_clip(speed=0.75):
    """The camera pans across a wide texture; border points leave the frame."""
    rng = np.random.default_rng(102)
    wide = _blurred_texture(rng, HEIGHT, WIDTH + int(speed * FRAMES) + 4)
    out = []
    for t in range(FRAMES):
        x0 = speed * t
        i = int(x0)
        frac = x0 - i
        f = (1 - frac) * wide[:, i : i + WIDTH]
        f += frac * wide[:, i + 1 : i + 1 + WIDTH]
        out.append(f)
    return _to_rgb(np.stack(out))


def make_morph_clip():
    """Gentle dissolve between two related textures plus a slow brightening;
    a handful of churning blobs pop up for a few frames each."""
    import cv2

    rng = np.random.default_rng(103)
    a = _blurred_texture(rng, HEIGHT, WIDTH)
    field = cv2.GaussianBlur(
        rng.uniform(-25, 25, size=(HEIGHT, WIDTH)).astype(np.float32), (9, 9), 3.0
    )
    b = np.clip(a + field, 0, 255)
    events = [
        (
            int(rng.integers(1, FRAMES - 5)),
            int(rng.integers(10, WIDTH - 10)),
            int(rng.integers(8, HEIGHT - 8)),
        )
        for _ in range(8)
    ]
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    out = []
    for t in range(FRAMES):
        alpha = t / (FRAMES - 1)
        f = (1 - alpha) * a + alpha * b + 14.0 * alpha
        for start, cx, cy in events:
            if start <= t < start + 4:
                mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= 25
                f[mask] = rng.uniform(40, 215, size=int(mask.sum()))
        out.append(f)
    return _to_rgb(np.stack(out))


def make_static_clip():
    """Nothing moves, nothing changes."""
    return _to_rgb(np.full((FRAMES, HEIGHT, WIDTH), 128.0))


def make_sunrise_clip():
    """The whole scene brightens end to end: an unmistakable time-lapse."""
    rng = np.random.default_rng(104)
    tex = _blurred_texture(rng, HEIGHT, WIDTH, lo=-40, hi=40)
    out = [
        np.clip(30 + 190 * t / (FRAMES - 1) + tex, 0, 255) for t in range(FRAMES)
    ]
    return _to_rgb(np.stack(out))


def gray_of(frames):
    return frames.mean(axis=-1).astype(np.uint8)


def write_payload(path, frames):
    """Binary frame payload: 16-byte big-endian header, then raw pixels."""
    f, h, w, c = frames.shape
    path.write_bytes(struct.pack(">IIII", h, w, c, f) + frames.tobytes())


@pytest.fixture(scope="session")
def growth_clip():
    return make_growth_clip()


@pytest.fixture(scope="session")
def pan_clip():
    return make_pan_clip()


@pytest.fixture(scope="session")
def morph_clip():
    return make_morph_clip()


@pytest.fixture(scope="session")
def static_clip():
    return make_static_clip()


@pytest.fixture(scope="session")
def sunrise_clip():
    return make_sunrise_clip()
