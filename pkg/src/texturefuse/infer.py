"""Dense-prediction inference: per-location argmax labels, max-voting over
the label grid, and the K-sample fused prediction over concatenated haptic
and visual features. Ties (both per-location and in the vote) break to the
lowest class index so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .builders import fusion_tap_index
from .haptic import Spectrogram

DEFAULT_FUSION_SAMPLES = 1000


@dataclass(frozen=True)
class PredictionGrid:
    """probs: (classes, Gh, Gw) per-location softmax vectors."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs)
        if p.ndim != 3:
            raise ValueError(f"prediction grid must be (classes, Gh, Gw), got shape {p.shape}")
        sums = p.sum(axis=0)
        if p.min() < 0 or np.abs(sums - 1.0).max() > 1e-5:
            raise ValueError("grid locations must hold softmax vectors (nonnegative, summing to 1)")


@dataclass(frozen=True)
class VoteResult:
    label: int
    counts: np.ndarray
    fragment_labels: np.ndarray


def argmax_labels(grid: PredictionGrid) -> np.ndarray:
    """Per-location most-probable class, (Gh, Gw) ints."""
    return np.argmax(grid.probs, axis=0)


def max_vote(labels, class_count: int | None = None) -> VoteResult:
    """Majority vote over per-location labels."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot vote over an empty label set")
    flat = labels.ravel().astype(np.int64)
    counts = np.bincount(flat, minlength=class_count or int(flat.max()) + 1)
    return VoteResult(int(np.argmax(counts)), counts, labels)


def predict_grid(net, x) -> PredictionGrid:
    """Dense forward of one (C, H, W) sample into a PredictionGrid."""
    return PredictionGrid(net.forward(x, train=False))


def classify_haptic(net, spec: Spectrogram) -> VoteResult:
    """Spectrogram -> dense grid -> per-location labels -> vote."""
    min_t = net.spec.native_input[1]
    if spec.num_frames < min_t:
        raise ValueError(
            f"spectrogram has {spec.num_frames} frames; classification needs at least {min_t}"
        )
    grid = predict_grid(net, spec.frames)
    return max_vote(argmax_labels(grid), net.spec.class_count)


def classify_image(net, pixels: np.ndarray) -> VoteResult:
    min_h, min_w = net.spec.native_input
    if pixels.shape[1] < min_h or pixels.shape[2] < min_w:
        raise ValueError(
            f"image {pixels.shape[1]}x{pixels.shape[2]} is smaller than the "
            f"{min_h}x{min_w} minimum input"
        )
    grid = predict_grid(net, pixels)
    return max_vote(argmax_labels(grid), net.spec.class_count)


def sample_location_pairs(h_grid: tuple[int, int], v_grid: tuple[int, int], k: int, rng):
    """K independent (haptic location, visual location) index pairs, uniform
    with replacement over the two grids. Returns flat indices into each grid.
    """
    if k < 1:
        raise ValueError(f"sample count must be >= 1, got {k}")
    hn = h_grid[0] * h_grid[1]
    vn = v_grid[0] * v_grid[1]
    return rng.integers(0, hn, size=k), rng.integers(0, vn, size=k)


def fused_grid(
    haptic_net,
    visual_net,
    fusion_head,
    spec: Spectrogram,
    pixels: np.ndarray,
    k: int = DEFAULT_FUSION_SAMPLES,
    rng=None,
    layer_choice: str = "fc2",
    tap: str = "output",
) -> PredictionGrid:
    """K fused predictions as a (classes, 1, K) grid: unimodal feature maps
    are sampled per location, concatenated, and pushed through the head.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    h_tap = fusion_tap_index(haptic_net.spec, layer_choice, tap)
    v_tap = fusion_tap_index(visual_net.spec, layer_choice, tap)
    h_feat = haptic_net.forward(spec.frames, train=False, upto=h_tap)  # (Ch, gh, gw)
    v_feat = visual_net.forward(pixels, train=False, upto=v_tap)
    hi, vi = sample_location_pairs(h_feat.shape[1:], v_feat.shape[1:], k, rng)
    h_cols = h_feat.reshape(h_feat.shape[0], -1)[:, hi]  # (Ch, K)
    v_cols = v_feat.reshape(v_feat.shape[0], -1)[:, vi]
    fused = np.concatenate([h_cols, v_cols], axis=0)[:, None, :]  # (Ch+Cv, 1, K)
    return PredictionGrid(fusion_head.forward(fused, train=False))


def classify_fused(
    haptic_net,
    visual_net,
    fusion_head,
    spec: Spectrogram,
    pixels: np.ndarray,
    k: int = DEFAULT_FUSION_SAMPLES,
    rng=None,
    layer_choice: str = "fc2",
    tap: str = "output",
) -> VoteResult:
    """Vote over the K fused per-pair predictions."""
    grid = fused_grid(haptic_net, visual_net, fusion_head, spec, pixels, k, rng, layer_choice, tap)
    return max_vote(argmax_labels(grid), fusion_head.spec.class_count)
