"""Frame pseudo-labels from pseudo-scores: single and dual thresholds, calibration."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import VideoClassifier, label_from_probability, predict_videos
from .preprocess import FeatureSequence
from .saliency import PseudoScores, pseudo_scores

log = logging.getLogger(__name__)

SINGLE = "single"
DUAL = "dual"
NORMALIZED = "normalized"
RAW = "raw"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FramePseudoLabels:
    video_id: str
    labels: np.ndarray  # (T,) 0/1, meaningful where used
    used: np.ndarray  # (T,) bool

    @property
    def n_used(self) -> int:
        return int(self.used.sum())


@dataclass(frozen=True)
class ThresholdSpec:
    mode: str
    tau: float | None = None
    tau1: float | None = None
    tau2: float | None = None
    scale: str = NORMALIZED

    def __post_init__(self):
        if self.scale not in (NORMALIZED, RAW):
            raise ValueError(f"scale must be {NORMALIZED!r} or {RAW!r}")
        if self.mode == SINGLE:
            if self.tau is None or not np.isfinite(self.tau):
                raise ValueError("single threshold needs a finite tau")
        elif self.mode == DUAL:
            if self.tau1 is None or self.tau2 is None:
                raise ValueError("dual threshold needs tau1 and tau2")
            if not self.tau1 < self.tau2:
                raise ValueError(f"dual threshold needs tau1 < tau2, got {self.tau1} >= {self.tau2}")
        else:
            raise ValueError(f"mode must be {SINGLE!r} or {DUAL!r}")

    @classmethod
    def single(cls, tau: float, scale: str = NORMALIZED) -> "ThresholdSpec":
        return cls(SINGLE, tau=float(tau), scale=scale)

    @classmethod
    def dual(cls, tau1: float, tau2: float, scale: str = NORMALIZED) -> "ThresholdSpec":
        return cls(DUAL, tau1=float(tau1), tau2=float(tau2), scale=scale)

    @property
    def label(self) -> str:
        return "1 Thr." if self.mode == SINGLE else "2 Thr."

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "scale": self.scale}
        if self.mode == SINGLE:
            d["tau"] = self.tau
        else:
            d["tau1"], d["tau2"] = self.tau1, self.tau2
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdSpec":
        return cls(d["mode"], d.get("tau"), d.get("tau1"), d.get("tau2"), d.get("scale", NORMALIZED))


def _values(scores, scale: str = NORMALIZED) -> np.ndarray:
    if isinstance(scores, PseudoScores):
        return scores.raw if scale == RAW else scores.scores
    return np.asarray(scores, dtype=np.float64)


def _vid(scores) -> str:
    return scores.video_id if isinstance(scores, PseudoScores) else ""


def single_threshold(scores, video_pred: int, tau: float, scale: str = NORMALIZED) -> FramePseudoLabels:
    s = _values(scores, scale)
    used = np.ones(s.shape, dtype=bool)
    if video_pred == 0:
        return FramePseudoLabels(_vid(scores), np.zeros(s.shape, dtype=np.int8), used)
    return FramePseudoLabels(_vid(scores), (s > tau).astype(np.int8), used)


def dual_threshold(scores, video_pred: int, tau1: float, tau2: float, scale: str = NORMALIZED) -> FramePseudoLabels:
    """Frames with ``tau1 <= s <= tau2`` in a positive video are marked unused."""
    if not tau1 < tau2:
        raise ValueError(f"dual threshold needs tau1 < tau2, got {tau1} >= {tau2}")
    s = _values(scores, scale)
    if video_pred == 0:
        return FramePseudoLabels(_vid(scores), np.zeros(s.shape, dtype=np.int8), np.ones(s.shape, dtype=bool))
    labels = (s > tau2).astype(np.int8)
    used = (s < tau1) | (s > tau2)
    return FramePseudoLabels(_vid(scores), labels, used)


def apply_threshold(scores, video_pred: int, spec: ThresholdSpec) -> FramePseudoLabels:
    if spec.mode == SINGLE:
        return single_threshold(scores, video_pred, spec.tau, spec.scale)
    return dual_threshold(scores, video_pred, spec.tau1, spec.tau2, spec.scale)


# -- calibration ------------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    spec: ThresholdSpec
    fp: int
    fn: int
    n_used: int
    n_frames: int

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "fp": self.fp, "fn": self.fn,
                "n_used": self.n_used, "n_frames": self.n_frames}


def threshold_grid(values: np.ndarray, n_grid: int = 101) -> np.ndarray:
    """Evenly spaced candidates over the observed range.

    A constant range collapses to the single point just above the common
    value, which labels every frame 0.
    """
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([np.nextafter(lo, np.inf)])
    return np.linspace(lo, hi, n_grid)


def calibrate_thresholds(scored_videos: Sequence, reference_labels: Sequence, mode: str = SINGLE,
                         scale: str = NORMALIZED, n_grid: int = 101, min_coverage: float = 0.8) -> Calibration:
    """Grid-search thresholds that balance false positives against false negatives.

    ``scored_videos`` are the pseudo-scores of videos predicted compensatory
    (negative-predicted videos are labeled 0 regardless of threshold).
    Single mode minimises ``|FP - FN|``, ties to the smaller tau. Dual mode
    searches grid pairs ``tau1 < tau2`` keeping at least ``min_coverage`` of
    frames in use, and minimises ``(|FP - FN|, FP + FN, -used, tau1, tau2)``.
    """
    if len(scored_videos) == 0:
        raise CalibrationError("empty calibration set")
    if len(scored_videos) != len(reference_labels):
        raise CalibrationError("scores and reference labels differ in length")
    s = np.concatenate([_values(v, scale) for v in scored_videos])
    y = np.concatenate([np.asarray(r) for r in reference_labels]).astype(bool)
    if s.shape != y.shape:
        raise CalibrationError("per-video score and label lengths differ")
    if s.size == 0:
        raise CalibrationError("empty calibration set")
    grid = threshold_grid(s, n_grid)
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    n = s.size
    if mode == SINGLE:
        fp = neg.size - np.searchsorted(neg, grid, side="right")
        fn = np.searchsorted(pos, grid, side="right")
        k = int(np.argmin(np.abs(fp - fn)))  # first minimum = smallest tau
        return Calibration(ThresholdSpec.single(grid[k], scale), int(fp[k]), int(fn[k]), n, n)
    if mode != DUAL:
        raise ValueError(f"mode must be {SINGLE!r} or {DUAL!r}")
    if grid.size == 1:
        t1 = grid[0]
        t2 = np.nextafter(t1, np.inf)
        return Calibration(ThresholdSpec.dual(t1, t2, scale), 0, int(pos.size), n, n)
    allv = np.sort(s)
    i, j = np.triu_indices(grid.size, k=1)
    t1, t2 = grid[i], grid[j]
    fp = neg.size - np.searchsorted(neg, t2, side="right")
    fn = np.searchsorted(pos, t1, side="left")
    band = np.searchsorted(allv, t2, side="right") - np.searchsorted(allv, t1, side="left")
    used = n - band
    ok = used >= min_coverage * n
    if not ok.any():
        raise CalibrationError(f"no threshold pair keeps {min_coverage:.0%} of frames in use")
    order = np.lexsort((t2, t1, -used, fp + fn, np.abs(fp - fn)))
    k = int(order[ok[order]][0])
    return Calibration(ThresholdSpec.dual(t1[k], t2[k], scale), int(fp[k]), int(fn[k]), int(used[k]), n)


# -- building the frame-level training set ------------------------------------------

@dataclass(frozen=True, eq=False)
class VideoScoring:
    video_id: str
    probability: float
    prediction: int
    scores: PseudoScores | None  # None when the video is predicted normal


def score_videos(model: VideoClassifier, features: Sequence[FeatureSequence], method: str, steps: int = 128,
                 target: str = "probability", reducer: str = "sum", decision_threshold: float = 0.5,
                 true_labels: Sequence[int] | None = None, on_map=None) -> list[VideoScoring]:
    """Predict each video and compute pseudo-scores where the prediction is positive.

    ``true_labels`` substitutes ground-truth video labels for the predictions
    (debugging aid that isolates pseudo-labelling error from Model A error).
    ``on_map`` receives each saliency map as it is produced.
    """
    probs = predict_videos(model, list(features))
    out = []
    for k, (f, p) in enumerate(zip(features, probs)):
        pred = int(true_labels[k]) if true_labels is not None else label_from_probability(p, decision_threshold)
        ps = None
        if pred == 1:
            smap, ps = pseudo_scores(model, f, method, steps, target, reducer)
            if on_map is not None:
                on_map(smap)
        out.append(VideoScoring(f.video_id, float(p), pred, ps))
    return out


def label_videos(scorings: Sequence[VideoScoring], lengths: dict[str, int], spec: ThresholdSpec) -> list[FramePseudoLabels]:
    out = []
    for sc in scorings:
        if sc.prediction == 0 or sc.scores is None:
            T = lengths[sc.video_id]
            out.append(FramePseudoLabels(sc.video_id, np.zeros(T, dtype=np.int8), np.ones(T, dtype=bool)))
        else:
            out.append(apply_threshold(sc.scores, 1, spec))
    return out


def frame_training_set(features: Sequence[FeatureSequence], labels: Sequence[FramePseudoLabels]) -> tuple[np.ndarray, np.ndarray]:
    """Stack (frame feature, label) pairs of used frames, in video order."""
    by_id = {pl.video_id: pl for pl in labels}
    xs, zs = [], []
    for f in features:
        pl = by_id[f.video_id]
        xs.append(f.features[pl.used])
        zs.append(pl.labels[pl.used])
    if not xs:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int8)
    return np.concatenate(xs), np.concatenate(zs)


def build_pseudo_dataset(features: Sequence[FeatureSequence], model: VideoClassifier, method: str,
                         spec: ThresholdSpec, steps: int = 128, **score_kw) -> tuple[np.ndarray, np.ndarray, list[FramePseudoLabels]]:
    scorings = score_videos(model, features, method, steps, **score_kw)
    labels = label_videos(scorings, {f.video_id: f.n_frames for f in features}, spec)
    x, z = frame_training_set(features, labels)
    return x, z, labels


def broadcast_labels(video_id: str, video_label: int, T: int) -> FramePseudoLabels:
    """Every frame inherits the video label."""
    return FramePseudoLabels(video_id, np.full(T, int(video_label), dtype=np.int8), np.ones(T, dtype=bool))


# -- export ---------------------------------------------------------------------

def write_pseudo_labels(labels: Sequence[FramePseudoLabels], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pl in labels:
            rec = {"video_id": pl.video_id, "labels": [int(x) for x in pl.labels], "used": [bool(u) for u in pl.used]}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_pseudo_labels(path: str | Path) -> list[FramePseudoLabels]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                labels = np.array(rec["labels"], dtype=np.int8)
                used = np.array(rec["used"], dtype=bool)
            except KeyError as exc:
                raise ValueError(f"line {lineno}: missing field {exc}") from exc
            if labels.shape != used.shape:
                raise ValueError(f"line {lineno}: labels and used differ in length")
            out.append(FramePseudoLabels(rec["video_id"], labels, used))
    return out
