"""Deterministic synthetic 32x32 RGB corpus in the CIFAR-10 binary layout.

Ten classes, each with a distinct geometric figure and a distinct hue.
Palettes are luminance-matched so chroma carries most of the class signal
while shapes stay legible in grayscale, and roughly one sample in five is
rendered near-gray so classifiers must keep a shape pathway alive instead
of collapsing onto the hue shortcut; that pathway is what lets them
recover when a desaturating transform strips an adversarial color shift.
Every sample gets mild per-channel gamma jitter so classifiers trained on
the corpus tolerate small global tone shifts but stay sensitive to large
ones. Records are written as data_batch_1..5.bin / test_batch.bin with
3073-byte rows, so the standard loader consumes them unchanged. Sample i
of a split is a pure function of (seed, i).
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .cifar10 import RECORD_BYTES, TRAIN_FILES, TEST_FILE

__all__ = [
    "CLASS_NAMES",
    "CORPUS_VERSION",
    "render_example",
    "generate_split",
    "write_corpus",
    "ensure_corpus",
    "default_data_root",
]

CLASS_NAMES = [
    "disk", "ring", "square", "frame", "triangle",
    "plus", "cross", "hbars", "vbars", "dots",
]

# bump whenever render_example changes; stale cached corpora regenerate
CORPUS_VERSION = 3
_META_PREFIX = "synth32 corpus version"

_HUES = np.arange(10) * 36.0  # degrees, evenly spread
_SIDE = 32
_SS = 2  # supersampling factor for edge anti-aliasing


def _hsv_to_rgb(h, s, v):
    h = (h % 360.0) / 60.0
    i = int(h) % 6
    f = h - int(h)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def _luminance(rgb):
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]


def _class_color(label, rng):
    """Class hue with jitter, rescaled to a shared luminance band."""
    hue = _HUES[label] + rng.uniform(-12.0, 12.0)
    sat = np.clip(0.58 + rng.uniform(-0.12, 0.12), 0.2, 0.95)
    rgb = np.array(_hsv_to_rgb(hue, sat, 0.8))
    target = 0.42 + rng.uniform(-0.04, 0.04)
    lum = _luminance(rgb)
    if lum > 1e-6:
        rgb = rgb * (target / lum)
    return np.clip(rgb, 0.06, 0.94)


def _shape_mask(label, cx, cy, r, coords):
    x, y = coords
    dx = x[None, :] - cx
    dy = y[:, None] - cy
    dx, dy = np.broadcast_arrays(dx, dy)
    ax, ay = np.abs(dx), np.abs(dy)
    d2 = dx * dx + dy * dy
    box = np.maximum(ax, ay)

    if label == 0:
        return d2 < r * r
    if label == 1:
        return ((0.55 * r) ** 2 < d2) & (d2 < r * r)
    if label == 2:
        return box < 0.82 * r
    if label == 3:
        return (0.45 * r < box) & (box < 0.82 * r)
    if label == 4:
        return (dy > -r) & (dy < 0.75 * r) & (ax < (dy + r) * 0.62)
    if label == 5:
        return ((ax < 0.32 * r) | (ay < 0.32 * r)) & (box < r)
    if label == 6:
        return ((np.abs(dx - dy) < 0.45 * r) | (np.abs(dx + dy) < 0.45 * r)) \
            & (d2 < (1.15 * r) ** 2)
    if label == 7:
        bar = np.floor((dy + 0.95 * r) / (0.475 * r)).astype(np.int64)
        return (ax < 0.95 * r) & (ay < 0.95 * r) & (bar % 2 == 0)
    if label == 8:
        bar = np.floor((dx + 0.95 * r) / (0.475 * r)).astype(np.int64)
        return (ax < 0.95 * r) & (ay < 0.95 * r) & (bar % 2 == 0)
    if label == 9:
        p = 0.9 * r
        gx = np.mod(dx, p) - p / 2
        gy = np.mod(dy, p) - p / 2
        return (gx * gx + gy * gy < (0.3 * p) ** 2) & (box < r)
    raise ValueError(f"label out of range: {label}")


def _tone_jitter(img, rng, pieces=4, spread=2.2):
    """Random monotone piecewise-linear tone curve, shared by all channels.

    Trains tone-warp invariance into the luminance pathway while leaving
    the relative channel structure (the hue signal) intact.
    """
    w = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=pieces))
    knots = np.concatenate([[0.0], np.cumsum(w)]) / w.sum()
    idx = np.minimum((img * pieces).astype(np.int64), pieces - 1)
    frac = img * pieces - idx
    return knots[idx] + frac * (w[idx] / w.sum())


def render_example(label, rng) -> np.ndarray:
    """One (32, 32, 3) uint8 sample of the given class."""
    side = _SIDE * _SS
    coords = (np.arange(side) + 0.5) / _SS, (np.arange(side) + 0.5) / _SS

    bg = 0.55 + rng.uniform(0.0, 0.17) + rng.normal(0.0, 0.02, size=3)
    color = _class_color(label, rng)
    if rng.uniform() < 0.2:
        # near-gray sample: keep the luminance, strip the chroma
        lum = _luminance(color)
        color = lum + (color - lum) * rng.uniform(0.0, 0.1)
    cx = 16.0 + rng.uniform(-3.5, 3.5)
    cy = 16.0 + rng.uniform(-3.5, 3.5)
    r = 9.0 * rng.uniform(0.8, 1.15)

    mask = _shape_mask(label, cx, cy, r, coords).astype(np.float64)
    mask = mask.reshape(_SIDE, _SS, _SIDE, _SS).mean(axis=(1, 3))

    img = bg[None, None, :] * (1.0 - mask[..., None]) + color[None, None, :] * mask[..., None]
    gamma = np.exp(rng.uniform(-0.18, 0.18, size=3))
    img = np.clip(img, 1e-6, 1.0) ** gamma[None, None, :]
    img = _tone_jitter(img, rng)
    img = img + rng.uniform(-0.03, 0.03) + rng.normal(0.0, 0.015, size=img.shape)
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def generate_split(count, seed, offset=0):
    """(pixels, labels) for records [offset, offset+count); label = index % 10."""
    pixels = np.empty((count, _SIDE, _SIDE, 3), dtype=np.uint8)
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        idx = offset + i
        labels[i] = idx % 10
        rng = np.random.default_rng([seed, idx])
        pixels[i] = render_example(int(labels[i]), rng)
    return pixels, labels


def _write_batch(path, pixels, labels):
    n = pixels.shape[0]
    records = np.empty((n, RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels.astype(np.uint8)
    planar = pixels.transpose(0, 3, 1, 2).reshape(n, -1)  # RRR..GGG..BBB
    records[:, 1:] = planar
    path.write_bytes(records.tobytes())


def write_corpus(root, seed=2024, train_records=50000, test_records=10000):
    """Render the full corpus into CIFAR-10-format batch files under root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    per_batch = train_records // len(TRAIN_FILES)
    for b, name in enumerate(TRAIN_FILES):
        pixels, labels = generate_split(per_batch, seed, offset=b * per_batch)
        _write_batch(root / name, pixels, labels)
    pixels, labels = generate_split(test_records, seed + 1, offset=0)
    _write_batch(root / TEST_FILE, pixels, labels)
    (root / "batches.meta.txt").write_text(
        f"{_META_PREFIX} {CORPUS_VERSION}\n" + "\n".join(CLASS_NAMES) + "\n")
    return root


def default_data_root() -> Path:
    env = os.environ.get("ADVFILTER_DATA")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "advfilter" / "synth32"


def ensure_corpus(root=None, seed=2024, train_records=50000, test_records=10000) -> Path:
    """Return a directory holding the batch files, rendering them on first use.

    Points at real CIFAR-10 batches unchanged when the directory already
    contains them (e.g. via ADVFILTER_DATA).
    """
    root = Path(root) if root is not None else default_data_root()
    needed = [root / n for n in TRAIN_FILES] + [root / TEST_FILE]
    if all(p.exists() for p in needed):
        meta = root / "batches.meta.txt"
        lines = meta.read_text().splitlines() if meta.exists() else []
        first = lines[0] if lines else ""
        if not first.startswith(_META_PREFIX) and first not in CLASS_NAMES:
            return root  # foreign batches (e.g. real CIFAR-10), leave untouched
        if first == f"{_META_PREFIX} {CORPUS_VERSION}":
            return root
        # ours but stale: fall through and regenerate
    return write_corpus(root, seed=seed, train_records=train_records,
                        test_records=test_records)
