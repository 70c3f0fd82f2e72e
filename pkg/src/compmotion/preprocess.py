"""Keypoint trajectories to displacement features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import PoseSequence

SMOOTHING_WINDOW = 5


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    video_id: str
    features: np.ndarray  # (T, D), D = J * 3

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def offset_by_initial(seq: PoseSequence) -> PoseSequence:
    """Express every joint as its displacement from the first frame."""
    f = seq.frames
    return seq.with_frames(f - f[0:1])


def trailing_mean(x: np.ndarray, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Causal moving average along axis 0.

    ``out[t] = mean(x[max(0, t - window + 1) : t + 1])``, so the first
    ``window - 1`` rows average over fewer samples.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    total = x.copy()
    for lag in range(1, min(window, T)):
        total[lag:] += x[:-lag]
    counts = np.minimum(np.arange(1, T + 1), window).reshape((T,) + (1,) * (x.ndim - 1))
    return total / counts


def moving_average(seq: PoseSequence, window: int = SMOOTHING_WINDOW) -> PoseSequence:
    return seq.with_frames(trailing_mean(seq.frames, window))


def to_features(seq: PoseSequence, window: int = SMOOTHING_WINDOW) -> FeatureSequence:
    """Offset, smooth, then flatten each frame joint-major as (x, y, z) triples."""
    smoothed = moving_average(offset_by_initial(seq), window).frames
    T, J, _ = smoothed.shape
    return FeatureSequence(seq.video_id, smoothed.reshape(T, J * 3))
