"""Gradient saliency on a video classifier and per-frame pseudo-scores."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .preprocess import FeatureSequence

VANILLA = "VanillaGradient"
INTEGRATED = "IntegratedGradients"
METHODS = (VANILLA, INTEGRATED)
METHOD_ALIASES = {"VG": VANILLA, "IG": INTEGRATED, VANILLA: VANILLA, INTEGRATED: INTEGRATED}

TARGETS = ("probability", "logit")
REDUCERS = ("sum", "mean", "max")


def resolve_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown saliency method {name!r}; use VG or IG") from None


def short_method(name: str) -> str:
    return "VG" if resolve_method(name) == VANILLA else "IG"


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    video_id: str
    values: np.ndarray  # (T, D), nonnegative
    method: str
    raw_signed: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class PseudoScores:
    video_id: str
    scores: np.ndarray  # (T,) in [0, 1]
    raw: np.ndarray  # (T,)


def _features(f) -> tuple[str, np.ndarray]:
    if isinstance(f, FeatureSequence):
        return f.video_id, np.asarray(f.features, dtype=np.float64)
    return "", np.asarray(f, dtype=np.float64)


def _target(model, x: Tensor, target: str) -> Tensor:
    """Per-sample target scalar, shape (B,). Padding never enters: x holds true frames only."""
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    z = model.logits(x, np.ones(x.shape[:2]))
    return ad.sigmoid(z) if target == "probability" else z


def input_gradients(model, x: np.ndarray, target: str = "probability") -> np.ndarray:
    """d target / d x for each sample of a ``(B, T, D)`` batch.

    Samples do not interact in eval mode, so the gradient of the summed
    targets is the stack of per-sample gradients.
    """
    leaf = Tensor(x, requires_grad=True)
    out = _target(model, leaf, target).sum()
    return ad.grad_wrt_input(out, leaf)


def vanilla_gradient(model, features, target: str = "probability") -> SaliencyMap:
    vid, x = _features(features)
    g = input_gradients(model, x[None], target)[0]
    return SaliencyMap(vid, np.abs(g), VANILLA)


def integrated_gradients(model, features, baseline=None, steps: int = 128, target: str = "probability",
                         chunk: int = 64) -> SaliencyMap:
    """Midpoint-rule path integral of gradients from ``baseline`` to ``features``.

    The default baseline is all zeros: zero displacement, i.e. the subject's
    starting pose after offset preprocessing.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    vid, x = _features(features)
    base = np.zeros_like(x) if baseline is None else _features(baseline)[1]
    if base.shape != x.shape:
        raise ValueError(f"baseline shape {base.shape} != input shape {x.shape}")
    diff = x - base
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    total = np.zeros_like(x)
    for lo in range(0, steps, chunk):
        a = alphas[lo:lo + chunk][:, None, None]
        total += input_gradients(model, base[None] + a * diff[None], target).sum(axis=0)
    signed = diff * (total / steps)
    return SaliencyMap(vid, np.abs(signed), INTEGRATED, signed)


def compute_saliency(model, features, method: str, steps: int = 128, target: str = "probability") -> SaliencyMap:
    if resolve_method(method) == VANILLA:
        return vanilla_gradient(model, features, target)
    return integrated_gradients(model, features, steps=steps, target=target)


def aggregate_per_frame(smap: SaliencyMap, reducer: str = "sum") -> np.ndarray:
    if reducer == "sum":
        return smap.values.sum(axis=1)
    if reducer == "mean":
        return smap.values.mean(axis=1)
    if reducer == "max":
        return smap.values.max(axis=1)
    raise ValueError(f"reducer must be one of {REDUCERS}")


def normalize_minmax(raw, video_id: str = "") -> PseudoScores:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("need at least one frame")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        scores = np.zeros_like(raw)
    else:
        scores = (raw - lo) / (hi - lo)
    return PseudoScores(video_id, scores, raw)


def pseudo_scores(model, features, method: str, steps: int = 128, target: str = "probability",
                  reducer: str = "sum") -> tuple[SaliencyMap, PseudoScores]:
    smap = compute_saliency(model, features, method, steps, target)
    return smap, normalize_minmax(aggregate_per_frame(smap, reducer), smap.video_id)


# -- export ----------------------------------------------------------------------
# <video_id>.map.tsv    one row per frame, one tab-separated column per feature
# <video_id>.scores.tsv header "frame\traw\tscore", one row per frame
# numbers use %.17g, which round-trips float64 exactly

def write_map(smap: SaliencyMap, directory: str | Path) -> Path:
    path = Path(directory) / f"{smap.video_id}.map.tsv"
    np.savetxt(path, smap.values, fmt="%.17g", delimiter="\t")
    return path


def write_scores(ps: PseudoScores, directory: str | Path) -> Path:
    path = Path(directory) / f"{ps.video_id}.scores.tsv"
    with path.open("w", encoding="utf-8") as fh:
        fh.write("frame\traw\tscore\n")
        for t, (r, s) in enumerate(zip(ps.raw, ps.scores)):
            fh.write(f"{t}\t{r:.17g}\t{s:.17g}\n")
    return path


def read_scores(path: str | Path) -> PseudoScores:
    path = Path(path)
    arr = np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2)
    vid = path.name[: -len(".scores.tsv")]
    return PseudoScores(vid, arr[:, 2].copy(), arr[:, 1].copy())


def read_map(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter="\t", ndmin=2)
