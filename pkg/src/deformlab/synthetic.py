"""Procedural image generators used when no dataset files are on disk.

``glyph_templates`` draws per-class stroke glyphs (smooth random line
segments) that serve as class templates for deformed-template tasks.
``smooth_noise_images`` produces 1/f-spectrum noise with natural-image-like
spatial correlation, useful as a probe batch for sensitivity measurements.
Both are pure functions of their seeds.
"""

from __future__ import annotations

import numpy as np

from .seeding import rng_from


def _segment_distance(rows, cols, p0, p1):
    """Distance from every pixel center to the segment p0-p1."""
    d = p1 - p0
    length_sq = float(d @ d)
    if length_sq == 0.0:
        return np.hypot(rows - p0[0], cols - p0[1])
    t = ((rows - p0[0]) * d[0] + (cols - p0[1]) * d[1]) / length_sq
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(rows - (p0[0] + t * d[0]), cols - (p0[1] + t * d[1]))


def glyph_templates(classes=10, size=28, channels=1, seed=0):
    """One stroke-glyph image per class, shape (classes, size, size, channels).

    Each glyph is a union of 3..6 soft-edged line segments with a random
    stroke width, scaled to peak at 1.  Values lie in [0, 1].
    """
    if classes < 2 or size < 8:
        raise ValueError("need at least 2 classes and size >= 8")
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((classes, size, size, channels), dtype=np.float32)
    margin = size / 7.0
    for c in range(classes):
        rng = rng_from(seed, "glyph", c)
        n_strokes = int(rng.integers(3, 7))
        width = rng.uniform(size / 28.0, size / 14.0)
        canvas = np.zeros((size, size))
        pts = rng.uniform(margin, size - 1 - margin, size=(n_strokes + 1, 2))
        for s in range(n_strokes):
            # chain segments end to end so the glyph is connected
            dist = _segment_distance(rows, cols, pts[s], pts[s + 1])
            canvas = np.maximum(canvas, np.exp(-(dist**2) / (2.0 * width * width)))
        canvas /= canvas.max()
        if channels == 1:
            out[c, :, :, 0] = canvas
        else:
            tint = rng.uniform(0.55, 1.0, size=channels)
            out[c] = (canvas[:, :, None] * tint).astype(np.float32)
    return out


def smooth_noise_images(n, size=32, channels=3, seed=0):
    """1/f-filtered Gaussian noise, min-max scaled to [0, 1] per image."""
    if n < 1 or size < 4:
        raise ValueError("need n >= 1 and size >= 4")
    rng = rng_from(seed, "smooth-noise")
    fr = np.fft.fftfreq(size)[:, None]
    fc = np.fft.fftfreq(size)[None, :]
    amp = 1.0 / np.hypot(fr, fc, dtype=np.float64).clip(min=1.0 / size)
    out = np.empty((n, size, size, channels), dtype=np.float32)
    for i in range(n):
        base = np.fft.ifft2(np.fft.fft2(rng.normal(size=(size, size))) * amp).real
        img = np.empty((size, size, channels))
        for ch in range(channels):
            wiggle = np.fft.ifft2(np.fft.fft2(rng.normal(size=(size, size))) * amp).real
            img[:, :, ch] = base + 0.35 * wiggle
        lo, hi = img.min(), img.max()
        out[i] = ((img - lo) / (hi - lo)).astype(np.float32)
    return out
