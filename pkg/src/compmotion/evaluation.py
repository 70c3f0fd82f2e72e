"""AUC, confusion counts, paired t-tests and LOSO report aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import betainc

log = logging.getLogger(__name__)

PSEUDO = "pseudo"
GROUND_TRUTH = "ground_truth"
LABEL_BROADCAST = "label_broadcast"
BROADCAST_TRAINED = "broadcast_trained"
CONDITIONS = (PSEUDO, GROUND_TRUTH, LABEL_BROADCAST, BROADCAST_TRAINED)
CONDITION_TITLES = {GROUND_TRUTH: "Ground Truth", LABEL_BROADCAST: "Video Label", BROADCAST_TRAINED: "Broadcast MLP"}


class UndefinedAUC(ValueError):
    """Scores for a single class only; the AUC is undefined."""


class DegenerateTest(ValueError):
    """All paired differences identical; the t statistic is undefined."""


def auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney statistic, ties counted one half.

    Uses mid-ranks over the sorted scores, O(n log n).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # mid-rank (1-based) of each tie block
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], s.size]
    block_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(block_rank, ends - starts)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_or_none(scores, labels) -> float | None:
    try:
        return auc(scores, labels)
    except UndefinedAUC:
        return None


class Confusion(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int


def confusion_counts(labels, predictions, used_mask=None) -> Confusion:
    y = np.asarray(labels).astype(bool)
    p = np.asarray(predictions).astype(bool)
    if y.shape != p.shape:
        raise ValueError(f"labels {y.shape} and predictions {p.shape} differ in length")
    m = np.ones(y.shape, dtype=bool) if used_mask is None else np.asarray(used_mask).astype(bool)
    if m.shape != y.shape:
        raise ValueError(f"used mask {m.shape} differs in length from labels {y.shape}")
    y, p = y[m], p[m]
    return Confusion(int((y & p).sum()), int((~y & p).sum()), int((~y & ~p).sum()), int((y & ~p).sum()))


class TTestResult(NamedTuple):
    t: float
    p: float
    dof: int


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test of ``a - b`` against zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        raise DegenerateTest("differences have zero variance; t is undefined")
    t = d.mean() / (sd / math.sqrt(n))
    dof = n - 1
    p = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return TTestResult(float(t), min(p, 1.0), dof)


# -- fold results and reports ----------------------------------------------------

@dataclass
class FoldResult:
    held_out_subject: str
    model: str
    method: str  # "VG", "IG", or "-" when no saliency is involved
    threshold: str  # "1 Thr.", "2 Thr.", or "-"
    condition: str  # one of CONDITIONS
    video_auc: float | None
    frame_auc: float | None
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    n_frames: int = 0
    config: dict = field(default_factory=dict)

    @property
    def counts(self) -> Confusion:
        return Confusion(self.tp, self.fp, self.tn, self.fn)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FoldResult":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @property
    def cell(self) -> tuple[str, str, str, str]:
        return (self.model, self.method, self.threshold, self.condition)


@dataclass
class Cell:
    model: str
    method: str
    threshold: str
    condition: str
    metric: str  # video_auc | frame_auc
    mean: float | None
    std: float | None
    n_folds: int
    n_excluded: int

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.model, self.method, self.threshold, self.condition)

    def fmt(self) -> str:
        if self.mean is None:
            return "n/a"
        return f"{self.mean:.2f} ± {self.std:.2f}"


@dataclass
class Comparison:
    left: str
    right: str
    metric: str
    n: int
    t: float | None
    p: float | None
    dof: int | None
    note: str = ""


@dataclass
class StudyReport:
    cells: list[Cell]
    comparisons: list[Comparison]
    failures: list[dict] = field(default_factory=list)

    def cell(self, metric: str, condition: str = PSEUDO, model=None, method=None, threshold=None) -> Cell:
        for c in self.cells:
            if c.metric != metric or c.condition != condition:
                continue
            if model is not None and c.model != model:
                continue
            if method is not None and c.method != method:
                continue
            if threshold is not None and c.threshold != threshold:
                continue
            return c
        raise KeyError((metric, condition, model, method, threshold))

    def to_text(self) -> str:
        return render_text(self)

    def to_csv(self) -> str:
        return render_csv(self)


def _mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    # population std over folds
    return float(arr.mean()), float(arr.std(ddof=0))


def _cell_name(key: tuple[str, str, str, str]) -> str:
    model, method, threshold, condition = key
    if condition != PSEUDO:
        return CONDITION_TITLES.get(condition, condition)
    return f"{model} {method} {threshold}"


def aggregate_report(fold_results: Iterable[FoldResult], failures: Sequence[dict] = ()) -> StudyReport:
    """Mean ± population std per cell over folds; undefined AUCs are excluded and logged.

    Paired t-tests compare each pseudo-label cell against every reference
    condition on frame AUC, over folds where both are defined.
    """
    results = list(fold_results)
    if not results and not failures:
        raise ValueError("no fold results to aggregate")
    keys: list[tuple] = []
    for r in results:
        if r.cell not in keys:
            keys.append(r.cell)
    cells: list[Cell] = []
    per_key: dict[tuple, dict[str, dict[str, float]]] = {}
    for key in keys:
        rs = [r for r in results if r.cell == key]
        per_key[key] = {}
        for metric in ("video_auc", "frame_auc"):
            if metric == "video_auc" and key[3] != PSEUDO:
                continue
            vals = {r.held_out_subject: getattr(r, metric) for r in rs}
            defined = {s: v for s, v in vals.items() if v is not None}
            excluded = len(vals) - len(defined)
            if excluded:
                log.info("%s %s: %d fold(s) excluded (undefined AUC)", _cell_name(key), metric, excluded)
            per_key[key][metric] = defined
            mean, std = _mean_std([defined[s] for s in sorted(defined)])
            cells.append(Cell(*key, metric, mean, std, len(defined), excluded))
    comparisons = []
    refs = [k for k in keys if k[3] != PSEUDO]
    for key in keys:
        if key[3] != PSEUDO:
            continue
        for ref in refs:
            a, b = per_key[key]["frame_auc"], per_key[ref]["frame_auc"]
            common = sorted(set(a) & set(b))
            comp = Comparison(_cell_name(key), _cell_name(ref), "frame_auc", len(common), None, None, None)
            try:
                res = paired_t_test([a[s] for s in common], [b[s] for s in common])
                comp.t, comp.p, comp.dof = res.t, res.p, res.dof
            except (DegenerateTest, ValueError) as exc:
                comp.note = f"undefined: {exc}"
            comparisons.append(comp)
    return StudyReport(cells, comparisons, list(failures))


def _sorted_models(cells):
    return sorted({c.model for c in cells if c.condition == PSEUDO})


def render_text(report: StudyReport) -> str:
    lines = []
    video = [c for c in report.cells if c.metric == "video_auc"]
    if video:
        lines.append("Video-level AUC, LOSO (mean ± std)")
        for model in _sorted_models(video):
            seen = set()
            for c in video:
                if c.model != model:
                    continue
                # identical Model A across method/threshold cells within one run
                tag = (c.mean, c.std, c.n_folds)
                if tag in seen:
                    continue
                seen.add(tag)
                lines.append(f"  {model:<20} {c.fmt():>14}   n_folds={c.n_folds}")
        lines.append("")
    frame = [c for c in report.cells if c.metric == "frame_auc"]
    if frame:
        lines.append("Frame-level AUC, LOSO (mean ± std)")
        columns = []
        for c in frame:
            col = (c.model, c.method) if c.condition == PSEUDO else (CONDITION_TITLES.get(c.condition, c.condition), "")
            if col not in columns:
                columns.append(col)
        columns.sort(key=lambda k: (k[1] == "", k))
        header = ["#Thr."] + [f"{m} {meth}".strip() for m, meth in columns]
        rows = []
        for thr in sorted({c.threshold for c in frame if c.condition == PSEUDO}) or ["-"]:
            row = [thr]
            for m, meth in columns:
                hit = [c for c in frame if (c.condition == PSEUDO and c.model == m and c.method == meth and c.threshold == thr)
                       or (c.condition != PSEUDO and CONDITION_TITLES.get(c.condition, c.condition) == m)]
                row.append(hit[0].fmt() if hit else "")
            rows.append(row)
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines.append("  " + " | ".join(h.ljust(w) for h, w in zip(header, widths)))
        lines.append("  " + "-+-".join("-" * w for w in widths))
        for r in rows:
            lines.append("  " + " | ".join(v.ljust(w) for v, w in zip(r, widths)))
        lines.append("")
    if report.comparisons:
        lines.append("Paired t-tests (frame AUC, two-sided, 95% level)")
        for c in report.comparisons:
            if c.t is None:
                lines.append(f"  {c.left} vs {c.right}: {c.note} (n={c.n})")
            else:
                verdict = "significant" if c.p < 0.05 else "not significant"
                lines.append(f"  {c.left} vs {c.right}: t={c.t:.4f} dof={c.dof} p={c.p:.4g} ({verdict})")
        lines.append("")
    if report.failures:
        lines.append("Failed folds")
        for f in report.failures:
            lines.append(f"  {f.get('held_out_subject', '?')}: {f.get('error', '')}")
        lines.append("")
    return "\n".join(lines)


CSV_COLUMNS = ["model", "method", "threshold", "condition", "metric", "mean", "std", "n_folds", "n_excluded"]


def render_csv(report: StudyReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in report.cells:
        w.writerow([c.model, c.method, c.threshold, c.condition, c.metric,
                    "" if c.mean is None else repr(c.mean), "" if c.std is None else repr(c.std),
                    c.n_folds, c.n_excluded])
    return buf.getvalue()


def report_to_json(report: StudyReport) -> str:
    return json.dumps({"cells": [asdict(c) for c in report.cells],
                       "comparisons": [asdict(c) for c in report.comparisons],
                       "failures": report.failures}, indent=2, sort_keys=True)
