"""Quantitative instruments: deformation sensitivity and filter smoothness.

Sensitivity of a layer is the mean distance between each image's
representation and the representation of its deformed copy, normalized by
the median pairwise distance between the undeformed representations of the
same batch.  Smoothness of a conv layer is the total variation of its
weight tensor along the spatial axes divided by the tensor's L1 norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .deform import DeformationSpec, deform_image, per_image_specs
from .nn.network import Network, truncated_normal
from .seeding import rng_from

DISTANCE_KINDS = ("cosine", "euclidean")


class MetricError(ValueError):
    """Raised when a metric is undefined for the given input."""


def cosine_distance(a, b) -> float:
    """1 - cos(a, b), in [0, 2].  Zero-norm inputs are an error."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise MetricError("cosine distance undefined for a zero-norm vector")
    if np.array_equal(a, b):
        return 0.0
    cos = np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)
    return float(1.0 - cos)


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


def _pairwise_condensed(reps: np.ndarray, kind: str) -> np.ndarray:
    """Distances over the n(n-1)/2 unordered pairs of rows."""
    n = reps.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    if kind == "cosine":
        norms = np.linalg.norm(reps, axis=1, keepdims=True)
        unit = reps / norms
        gram = np.clip(unit @ unit.T, -1.0, 1.0)
        return 1.0 - gram[iu, ju]
    sq = np.einsum("ij,ij->i", reps, reps)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (reps @ reps.T)
    return np.sqrt(np.maximum(d2[iu, ju], 0.0))


def ncd_from_representations(clean, deformed, distance="cosine", label="representation"):
    """Normalized mean distance between paired representation rows.

    Numerator: mean over i of d(clean[i], deformed[i]).  Denominator: median
    of the n(n-1)/2 pairwise distances among the clean rows.  `label` only
    decorates error messages.
    """
    if distance not in DISTANCE_KINDS:
        raise MetricError(f"distance must be one of {DISTANCE_KINDS}, got {distance!r}")
    clean = np.asarray(clean, dtype=np.float64)
    deformed = np.asarray(deformed, dtype=np.float64)
    if clean.ndim != 2 or clean.shape != deformed.shape:
        raise MetricError(
            f"expected matching (n, d) arrays, got {clean.shape} and {deformed.shape}")
    n = clean.shape[0]
    if n < 2:
        raise MetricError(f"need at least 2 rows, got {n}")
    if distance == "cosine":
        if (np.linalg.norm(clean, axis=1) == 0.0).any() or \
                (np.linalg.norm(deformed, axis=1) == 0.0).any():
            raise MetricError(f"zero-norm representation at layer {label!r}")
    pair_fn = cosine_distance if distance == "cosine" else euclidean_distance
    numerator = float(np.mean([pair_fn(clean[i], deformed[i]) for i in range(n)]))
    denominator = float(np.median(_pairwise_condensed(clean, distance)))
    if denominator == 0.0:
        raise MetricError(
            f"degenerate batch at layer {label!r}: median pairwise distance is 0")
    return numerator / denominator


@dataclass(frozen=True)
class SensitivityProfile:
    labels: tuple
    scores: np.ndarray  # one score per recorded layer, same order as labels
    n_images: int
    spec: DeformationSpec
    distance: str

    def __post_init__(self):
        if len(self.labels) != len(self.scores):
            raise MetricError("one score per layer label required")

    def score_of(self, label: str) -> float:
        return float(self.scores[list(self.labels).index(label)])


def sensitivity_profile(net: Network, images, spec: DeformationSpec, distance="cosine"):
    """Per-recorded-layer sensitivity of ``net`` to deformations of ``spec``.

    Each image receives an independently sampled deformation whose seed is
    derived from ``spec.seed``.  Representations are flattened to vectors;
    the network runs in eval mode.
    """
    if distance not in DISTANCE_KINDS:
        raise MetricError(f"distance must be one of {DISTANCE_KINDS}, got {distance!r}")
    images = np.asarray(images)
    if images.ndim != 4:
        raise MetricError(f"expected an (n, h, w, c) batch, got shape {images.shape}")
    n = images.shape[0]
    if n < 2:
        raise MetricError(f"need at least 2 images, got {n}")

    deformed = np.empty_like(images)
    for i, ispec in enumerate(per_image_specs(spec, n)):
        deformed[i] = deform_image(images[i], ispec)[0]

    _, trace_u = net.forward(images, train=False, record=True)
    _, trace_d = net.forward(deformed, train=False, record=True)

    labels = []
    scores = []
    for (label, rep_u), (_, rep_d) in zip(trace_u.entries, trace_d.entries):
        u = rep_u.reshape(n, -1).astype(np.float64)
        d = rep_d.reshape(n, -1).astype(np.float64)
        labels.append(label)
        scores.append(ncd_from_representations(u, d, distance, label=label))
    return SensitivityProfile(tuple(labels), np.array(scores), n, spec, distance)


# ---- filter smoothness -----------------------------------------------------


def normalized_total_variation(w) -> float:
    """TV(W) / ||W||_1 for a conv weight tensor laid out (h, w, in, out).

    TV sums the L1 differences between spatially adjacent filter slices,
    over in-range neighbor pairs only.  Spatially constant filters give 0.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise MetricError(f"expected a 4-d (h, w, in, out) tensor, got shape {w.shape}")
    if w.shape[0] < 1 or w.shape[1] < 1:
        raise MetricError(f"empty spatial dims in shape {w.shape}")
    l1 = np.abs(w).sum()
    if l1 == 0.0:
        raise MetricError("normalized total variation undefined for an all-zero tensor")
    tv = np.abs(np.diff(w, axis=0)).sum() + np.abs(np.diff(w, axis=1)).sum()
    return float(tv / l1)


@dataclass(frozen=True)
class SmoothnessReport:
    labels: tuple
    values: np.ndarray  # one NTV value per conv layer, depth order
    baseline: float | None  # random-init reference level, when supplied

    def value_of(self, label: str) -> float:
        return float(self.values[list(self.labels).index(label)])


def smoothness_profile(net: Network, baseline=None) -> SmoothnessReport:
    """NTV of every conv layer in depth order (strided downsamplers included)."""
    convs = net.conv_layers()
    if not convs:
        raise MetricError("network has no conv layers")
    labels = tuple(label for label, _ in convs)
    values = np.array([normalized_total_variation(conv.w) for _, conv in convs])
    return SmoothnessReport(labels, values, baseline)


def baseline_init_ntv(shape, resamples=10_000, seed=0):
    """Monte-Carlo (mean, sample std) of NTV over freshly initialized filters.

    Filters are drawn the same way the network initializer draws them:
    truncated normal with std 1/sqrt(fan-in), cut at two sigma.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise MetricError(f"expected a 4-d (h, w, in, out) shape, got {shape}")
    if resamples < 100:
        raise MetricError(f"need at least 100 resamples for a stable estimate, got {resamples}")
    std = 1.0 / np.sqrt(shape[0] * shape[1] * shape[2])
    rng = rng_from(seed, "baseline-ntv")
    vals = np.empty(resamples)
    for i in range(resamples):
        vals[i] = normalized_total_variation(truncated_normal(rng, shape, std))
    return float(vals.mean()), float(vals.std(ddof=1))
