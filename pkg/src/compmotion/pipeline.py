"""End-to-end weakly supervised runs: LOSO folds, staged artifacts, grids.

Per fold, under ``<out>/fold_<subject>/``::

    model_a.json          video classifier checkpoint (best-validation epoch)
    train_a.json          Model A training curve
    saliency/predictions.tsv
    saliency/<video>.scores.tsv   (and <video>.map.tsv when maps are exported)
    thresholds.json       threshold spec actually used, with calibration counts
    pseudo_labels.jsonl
    model_b_<condition>.json
    fold_result.json      list of FoldResult records, one per condition
"""

from __future__ import annotations

import copy
import itertools
import json
import logging
import os
import statistics
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation as ev
from . import models as M
from . import pseudolabel as pl
from . import saliency as sal
from .dataset import Dataset, DatasetError, SynthConfig, generate_synthetic, load_dataset, split_for_subject
from .preprocess import FeatureSequence, to_features

log = logging.getLogger(__name__)

OUT_ENV = "COMPMOTION_OUT"
RUN_CONFIG_FILE = "run_config.json"

_STAGE_CODES = {"model_a_init": 1, "model_a_train": 2, "model_b_init": 3, "model_b_train": 4}


def derive_seed(seed: int, subject: str, stage: str) -> int:
    """Stable per-(fold, stage) seed, independent of which other folds run."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(subject.encode()), _STAGE_CODES[stage]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


_DEFAULT_BLOCKS = {
    "model_a": {"variant": M.ATTENTION, "hidden_size": None, "input_scale": 10.0},
    "threshold": {"mode": pl.SINGLE, "scale": pl.NORMALIZED, "calibrate": True, "tau": 0.5, "tau1": 0.3, "tau2": 0.7},
    "model_b": {"hidden": [64], "input_scale": 10.0},
}


@dataclass
class RunConfig:
    synth: SynthConfig | None = None
    dataset_path: str | None = None
    model_a: dict = field(default_factory=lambda: dict(_DEFAULT_BLOCKS["model_a"]))
    method: str = "IG"
    ig_steps: int = 128
    saliency_target: str = "probability"
    reducer: str = "sum"
    threshold: dict = field(default_factory=lambda: dict(_DEFAULT_BLOCKS["threshold"]))
    calibration_coverage: float = 0.8
    model_b: dict = field(default_factory=lambda: dict(_DEFAULT_BLOCKS["model_b"]))
    train_a: M.TrainConfig = field(default_factory=M.TrainConfig)
    train_b: M.TrainConfig = field(default_factory=M.TrainConfig)
    conditions: list[str] = field(default_factory=lambda: [ev.PSEUDO, ev.GROUND_TRUTH, ev.LABEL_BROADCAST])
    decision_threshold: float = 0.5
    use_true_video_labels: bool = False
    export_maps: bool = False
    output_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.synth is None) == (self.dataset_path is None):
            raise ValueError("RunConfig needs exactly one of 'synth' or 'dataset_path'")
        for k in ("model_a", "threshold", "model_b"):
            setattr(self, k, {**_DEFAULT_BLOCKS[k], **getattr(self, k)})
        self.method = sal.short_method(self.method)
        if self.ig_steps < 1:
            raise ValueError("ig_steps must be >= 1")
        bad = [c for c in self.conditions if c not in ev.CONDITIONS]
        if bad:
            raise ValueError(f"unknown conditions {bad}")
        self.default_spec()  # validates threshold block

    def default_spec(self) -> pl.ThresholdSpec:
        t = self.threshold
        if t.get("mode", pl.SINGLE) == pl.SINGLE:
            return pl.ThresholdSpec.single(t.get("tau", 0.5), t.get("scale", pl.NORMALIZED))
        return pl.ThresholdSpec.dual(t.get("tau1", 0.3), t.get("tau2", 0.7), t.get("scale", pl.NORMALIZED))

    @property
    def threshold_label(self) -> str:
        return "1 Thr." if self.threshold.get("mode", pl.SINGLE) == pl.SINGLE else "2 Thr."

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth"] = self.synth.to_dict() if self.synth is not None else None
        d["train_a"] = self.train_a.to_dict()
        d["train_b"] = self.train_b.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "RunConfig":
        d = copy.deepcopy(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown RunConfig fields: {sorted(unknown)}")
        if d.get("synth") is not None:
            d["synth"] = SynthConfig.from_dict(d["synth"])
        for k in ("train_a", "train_b"):
            if isinstance(d.get(k), dict):
                d[k] = M.TrainConfig.from_dict(d[k])
        if d.get("dataset_path") and base_dir is not None and not Path(d["dataset_path"]).is_absolute():
            d["dataset_path"] = str(Path(base_dir) / d["dataset_path"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update(kw)
        return RunConfig.from_dict(d)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(doc, base_dir=path.parent)


# -- data ---------------------------------------------------------------------------

@dataclass
class Prepared:
    dataset: Dataset
    features: dict[str, FeatureSequence]

    def feats(self, ds: Dataset) -> list[FeatureSequence]:
        return [self.features[v.video_id] for v in ds.videos]


def prepare(config: RunConfig) -> Prepared:
    ds = generate_synthetic(config.synth) if config.synth is not None else load_dataset(config.dataset_path)
    return Prepared(ds, {v.video_id: to_features(v.sequence) for v in ds.videos})


def fold_dir(out: Path, subject: str) -> Path:
    return out / f"fold_{subject}"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- stages -------------------------------------------------------------------------

def stage_train_video(config: RunConfig, prep: Prepared, subject: str, out: Path | None) -> M.VideoClassifier:
    train_ds, _ = split_for_subject(prep.dataset, subject)
    arch = config.model_a
    model = M.VideoClassifier(arch["variant"], prep.dataset.n_joints * 3, prep.dataset.max_frames,
                              hidden_size=arch.get("hidden_size"), dropout=config.train_a.dropout,
                              input_scale=arch.get("input_scale", 10.0),
                              seed=derive_seed(config.seed, subject, "model_a_init"))
    tcfg = config.train_a.replace(seed=derive_seed(config.seed, subject, "model_a_train"))
    report = M.train(model, prep.feats(train_ds), [v.video_label for v in train_ds.videos], tcfg)
    log.info("fold %s: Model A best epoch %d of %d", subject, report.best_epoch, report.epochs_run)
    if out is not None:
        d = fold_dir(out, subject)
        d.mkdir(parents=True, exist_ok=True)
        M.save_checkpoint(model, d / "model_a.json", tcfg)
        _write_json(d / "train_a.json", report.to_dict())
    return model


def stage_saliency(config: RunConfig, prep: Prepared, subject: str, model_a: M.VideoClassifier,
                   out: Path | None, export_maps: bool | None = None) -> list[pl.VideoScoring]:
    """Predict every training video and score the ones flagged compensatory."""
    train_ds, _ = split_for_subject(prep.dataset, subject)
    export_maps = config.export_maps if export_maps is None else export_maps
    sdir = None
    if out is not None:
        sdir = fold_dir(out, subject) / "saliency"
        sdir.mkdir(parents=True, exist_ok=True)
    on_map = (lambda m: sal.write_map(m, sdir)) if (sdir is not None and export_maps) else None
    true_labels = [v.video_label for v in train_ds.videos] if config.use_true_video_labels else None
    scorings = pl.score_videos(model_a, prep.feats(train_ds), config.method, config.ig_steps,
                               target=config.saliency_target, reducer=config.reducer,
                               decision_threshold=config.decision_threshold, true_labels=true_labels, on_map=on_map)
    if sdir is not None:
        with (sdir / "predictions.tsv").open("w", encoding="utf-8") as fh:
            fh.write("video_id\tprobability\tprediction\n")
            for sc in scorings:
                fh.write(f"{sc.video_id}\t{sc.probability:.17g}\t{sc.prediction}\n")
                if sc.scores is not None:
                    sal.write_scores(sc.scores, sdir)
    return scorings


def read_scorings(out: Path, subject: str) -> list[pl.VideoScoring]:
    sdir = fold_dir(out, subject) / "saliency"
    pred_path = sdir / "predictions.tsv"
    if not pred_path.exists():
        raise FileNotFoundError(f"{pred_path} not found; run the saliency stage first")
    scorings = []
    with pred_path.open(encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            vid, prob, pred = line.rstrip("\n").split("\t")
            scores = sal.read_scores(sdir / f"{vid}.scores.tsv") if int(pred) == 1 else None
            scorings.append(pl.VideoScoring(vid, float(prob), int(pred), scores))
    return scorings


def stage_pseudolabel(config: RunConfig, prep: Prepared, subject: str, scorings: Sequence[pl.VideoScoring],
                      out: Path | None) -> tuple[list[pl.FramePseudoLabels], pl.ThresholdSpec, dict]:
    train_ds, _ = split_for_subject(prep.dataset, subject)
    spec = config.default_spec()
    info: dict = {"calibrated": False}
    if config.threshold.get("calibrate", True):
        scored = [sc for sc in scorings if sc.scores is not None]
        refs = []
        for sc in scored:
            fl = prep.dataset.by_id(sc.video_id).frame_labels
            if fl is None:
                raise DatasetError(f"calibration needs reference frame labels; {sc.video_id} has none")
            refs.append(fl)
        try:
            cal = pl.calibrate_thresholds([sc.scores for sc in scored], refs, spec.mode, spec.scale,
                                          min_coverage=config.calibration_coverage)
            spec = cal.spec
            info = {"calibrated": True, **cal.to_dict()}
        except pl.CalibrationError as exc:
            # no predicted-positive videos: every label is 0 whatever the threshold
            log.warning("fold %s: calibration skipped (%s); using configured thresholds", subject, exc)
            info = {"calibrated": False, "reason": str(exc)}
    labels = pl.label_videos(scorings, {v.video_id: v.sequence.n_frames for v in train_ds.videos}, spec)
    if out is not None:
        d = fold_dir(out, subject)
        d.mkdir(parents=True, exist_ok=True)
        _write_json(d / "thresholds.json", {"spec": spec.to_dict(), "calibration": info})
        pl.write_pseudo_labels(labels, d / "pseudo_labels.jsonl")
    return labels, spec, info


def read_pseudo_stage(out: Path, subject: str) -> tuple[list[pl.FramePseudoLabels], pl.ThresholdSpec]:
    d = fold_dir(out, subject)
    labels = pl.read_pseudo_labels(d / "pseudo_labels.jsonl")
    spec = pl.ThresholdSpec.from_dict(json.loads((d / "thresholds.json").read_text())["spec"])
    return labels, spec


def _condition_training_set(cond: str, train_ds: Dataset, feats: list[FeatureSequence],
                            labels: Sequence[pl.FramePseudoLabels] | None):
    if cond == ev.PSEUDO:
        if labels is None:
            raise ValueError("pseudo condition needs pseudo-labels")
        return pl.frame_training_set(feats, labels)
    if cond == ev.GROUND_TRUTH:
        missing = [v.video_id for v in train_ds.videos if v.frame_labels is None]
        if missing:
            raise DatasetError(f"ground-truth condition needs frame labels; missing for {missing[:3]}")
        gt = [pl.FramePseudoLabels(v.video_id, v.frame_labels, np.ones(v.sequence.n_frames, dtype=bool))
              for v in train_ds.videos]
        return pl.frame_training_set(feats, gt)
    if cond == ev.BROADCAST_TRAINED:
        bc = [pl.broadcast_labels(v.video_id, v.video_label, v.sequence.n_frames) for v in train_ds.videos]
        return pl.frame_training_set(feats, bc)
    raise ValueError(cond)


def stage_train_frame(config: RunConfig, prep: Prepared, subject: str, model_a: M.VideoClassifier,
                      labels: Sequence[pl.FramePseudoLabels] | None, spec: pl.ThresholdSpec | None,
                      out: Path | None) -> list[ev.FoldResult]:
    """Train Model B per configured condition and evaluate both models on the held-out subject."""
    train_ds, test_ds = split_for_subject(prep.dataset, subject)
    train_feats, test_feats = prep.feats(train_ds), prep.feats(test_ds)
    video_probs = M.predict_videos(model_a, test_feats)
    video_auc = ev.auc_or_none(video_probs, [v.video_label for v in test_ds.videos])
    missing = [v.video_id for v in test_ds.videos if v.frame_labels is None]
    if missing:
        raise DatasetError(f"frame-level evaluation needs frame labels; missing for {missing[:3]}")
    test_x = np.concatenate([f.features for f in test_feats])
    test_y = np.concatenate([v.frame_labels for v in test_ds.videos])
    d = fold_dir(out, subject) if out is not None else None
    if d is not None:
        d.mkdir(parents=True, exist_ok=True)
    results = []
    for cond in config.conditions:
        if cond == ev.LABEL_BROADCAST:
            # no model: each held-out frame is scored with its video's true label
            probs = np.concatenate([np.full(v.sequence.n_frames, float(v.video_label)) for v in test_ds.videos])
            counts = ev.confusion_counts(test_y, probs > 0.5)
            results.append(ev.FoldResult(
                held_out_subject=subject, model="-", method="-", threshold="-", condition=cond, video_auc=None,
                frame_auc=ev.auc_or_none(probs, test_y), tp=counts.tp, fp=counts.fp, tn=counts.tn, fn=counts.fn,
                n_frames=int(test_y.size), config={}))
            continue
        x, z = _condition_training_set(cond, train_ds, train_feats, labels)
        if x.shape[0] == 0:
            raise ValueError(f"condition {cond}: no usable training frames")
        mcfg = config.model_b
        model_b = M.FrameClassifier(x.shape[1], mcfg.get("hidden", [64]), dropout=config.train_b.dropout,
                                    input_scale=mcfg.get("input_scale", 10.0),
                                    seed=derive_seed(config.seed, subject, "model_b_init"),
                                    allow_override=config.train_b.allow_override)
        tcfg = config.train_b.replace(seed=derive_seed(config.seed, subject, "model_b_train"))
        M.train(model_b, x, z, tcfg)
        probs = model_b.predict_proba(test_x)
        counts = ev.confusion_counts(test_y, probs > 0.5)
        if cond == ev.PSEUDO:
            method, thr = config.method, (spec.label if spec is not None else config.threshold_label)
            echo = {"threshold": spec.to_dict() if spec is not None else None, "n_train_frames": int(x.shape[0]),
                    "n_positive_train_frames": int(z.sum())}
        else:
            method, thr = "-", "-"
            echo = {"n_train_frames": int(x.shape[0]), "n_positive_train_frames": int(z.sum())}
        results.append(ev.FoldResult(
            held_out_subject=subject, model=config.model_a["variant"] if cond == ev.PSEUDO else "-",
            method=method, threshold=thr, condition=cond,
            video_auc=video_auc if cond == ev.PSEUDO else None,
            frame_auc=ev.auc_or_none(probs, test_y), tp=counts.tp, fp=counts.fp, tn=counts.tn, fn=counts.fn,
            n_frames=int(test_y.size), config=echo))
        if d is not None:
            M.save_checkpoint(model_b, d / f"model_b_{cond}.json", tcfg)
    if d is not None:
        _write_json(d / "fold_result.json", [r.to_dict() for r in results])
    return results


def run_fold(config: RunConfig, prep: Prepared, subject: str, out: Path | None) -> list[ev.FoldResult]:
    model_a = stage_train_video(config, prep, subject, out)
    labels, spec = None, None
    if ev.PSEUDO in config.conditions:
        scorings = stage_saliency(config, prep, subject, model_a, out)
        labels, spec, _ = stage_pseudolabel(config, prep, subject, scorings, out)
    return stage_train_frame(config, prep, subject, model_a, labels, spec, out)


def _fold_worker(config_dict: dict, subject: str, out: str | None):
    config = RunConfig.from_dict(config_dict)
    prep = prepare(config)
    return run_fold(config, prep, subject, Path(out) if out else None)


# -- LOSO driver ----------------------------------------------------------------------

@dataclass
class LosoOutcome:
    report: ev.StudyReport
    results: list[ev.FoldResult]
    failures: list[dict]


def resolve_out(config: RunConfig, out: str | Path | None) -> Path | None:
    if out is not None:
        return Path(out)
    if config.output_dir:
        return Path(config.output_dir)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else None


def write_report(report: ev.StudyReport, results: Sequence[ev.FoldResult], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.json").write_text(ev.report_to_json(report) + "\n", encoding="utf-8")
    with (out / "fold_results.jsonl").open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def run_loso(config: RunConfig, out: str | Path | None = None, jobs: int = 1,
             prep: Prepared | None = None) -> LosoOutcome:
    """Run every LOSO fold; a failing fold is recorded and the rest continue."""
    out_path = resolve_out(config, out)
    prep = prep or prepare(config)
    subjects = prep.dataset.subjects
    if len(subjects) < 2:
        raise DatasetError(f"LOSO needs at least 2 subjects, found fewer than 2 subjects ({len(subjects)})")
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / RUN_CONFIG_FILE).write_text(config.to_json(), encoding="utf-8")
    results: list[ev.FoldResult] = []
    failures: list[dict] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {s: pool.submit(_fold_worker, config.to_dict(), s, str(out_path) if out_path else None)
                    for s in subjects}
            outcomes = {}
            for s in subjects:
                try:
                    outcomes[s] = futs[s].result()
                except Exception as exc:  # noqa: BLE001 - recorded per fold
                    outcomes[s] = exc
    else:
        outcomes = {}
        for s in subjects:
            try:
                outcomes[s] = run_fold(config, prep, s, out_path)
            except Exception as exc:  # noqa: BLE001 - recorded per fold
                outcomes[s] = exc
    for s in subjects:
        o = outcomes[s]
        if isinstance(o, Exception):
            log.error("fold %s failed: %s", s, o)
            failures.append({"held_out_subject": s, "error": f"{type(o).__name__}: {o}"})
        else:
            results.extend(o)
    report = ev.aggregate_report(results, failures)
    if out_path is not None:
        write_report(report, results, out_path)
        _write_json(out_path / "failures.json", failures)
    return LosoOutcome(report, results, failures)


def collect_fold_results(directory: str | Path) -> tuple[list[ev.FoldResult], list[dict]]:
    directory = Path(directory)
    results = []
    for p in sorted(directory.rglob("fold_result.json")):
        results.extend(ev.FoldResult.from_dict(d) for d in json.loads(p.read_text(encoding="utf-8")))
    failures = []
    for p in sorted(directory.rglob("failures.json")):
        failures.extend(json.loads(p.read_text(encoding="utf-8")))
    if not results and not failures:
        raise FileNotFoundError(f"no fold_result.json files under {directory}")
    return results, failures


# -- grid ---------------------------------------------------------------------------

GRID_AXES = {"learning_rate": M.LEARNING_RATES, "dropout": M.DROPOUTS, "batch_size": M.BATCH_SIZES}


def expand_grid(base: RunConfig, axes: dict[str, Sequence] | None = None, models: Sequence[str] = ("train_a", "train_b")) -> list[RunConfig]:
    """Cartesian product of training hyperparameters applied to Models A and B alike."""
    axes = dict(GRID_AXES if axes is None else axes)
    names = list(axes)
    configs = []
    for combo in itertools.product(*(axes[n] for n in names)):
        kw = dict(zip(names, combo))
        d = base.to_dict()
        for m in models:
            d[m] = {**d[m], **kw}
        configs.append(RunConfig.from_dict(d))
    return configs


@dataclass
class GridRow:
    index: int
    seed: int
    train_a: dict
    train_b: dict
    model: str
    method: str
    threshold: str
    condition: str
    metric: str
    mean: float | None
    std: float | None
    n_folds: int
    best: bool = False
    error: str = ""


@dataclass
class GridSummary:
    rows: list[GridRow]

    def to_csv(self) -> str:
        head = ["index", "seed", "lr_a", "dropout_a", "batch_a", "lr_b", "dropout_b", "batch_b", "model", "method",
                "threshold", "condition", "metric", "mean", "std", "n_folds", "best", "error"]
        lines = [",".join(head)]
        for r in self.rows:
            vals = [r.index, r.seed, r.train_a["learning_rate"], r.train_a["dropout"], r.train_a["batch_size"],
                    r.train_b["learning_rate"], r.train_b["dropout"], r.train_b["batch_size"], r.model, r.method,
                    r.threshold, r.condition, r.metric, "" if r.mean is None else repr(r.mean),
                    "" if r.std is None else repr(r.std), r.n_folds, int(r.best), r.error.replace(",", ";")]
            lines.append(",".join(str(v) for v in vals))
        return "\n".join(lines) + "\n"

    def best_rows(self) -> list[GridRow]:
        return [r for r in self.rows if r.best]


def run_grid(configs: Sequence[RunConfig], out: str | Path | None = None, jobs: int = 1) -> GridSummary:
    """Run each config's LOSO study and flag the best mean AUC per cell.

    Best is judged on frame AUC for frame-level cells and video AUC for
    Model A cells; failures are recorded as rows with an error message.
    """
    if not configs:
        raise ValueError("empty grid")
    out_path = Path(out) if out is not None else None
    rows: list[GridRow] = []
    for i, cfg in enumerate(configs):
        sub = out_path / f"config_{i:03d}" if out_path is not None else None
        base = dict(index=i, seed=cfg.seed, train_a=cfg.train_a.to_dict(), train_b=cfg.train_b.to_dict())
        try:
            outcome = run_loso(cfg, sub, jobs=jobs)
        except Exception as exc:  # noqa: BLE001 - grid continues
            rows.append(GridRow(**base, model=cfg.model_a["variant"], method=cfg.method, threshold=cfg.threshold_label,
                                condition=ev.PSEUDO, metric="frame_auc", mean=None, std=None, n_folds=0,
                                error=f"{type(exc).__name__}: {exc}"))
            continue
        for c in outcome.report.cells:
            rows.append(GridRow(**base, model=c.model, method=c.method, threshold=c.threshold, condition=c.condition,
                                metric=c.metric, mean=c.mean, std=c.std, n_folds=c.n_folds))
    groups: dict[tuple, list[GridRow]] = {}
    for r in rows:
        if r.mean is not None:
            groups.setdefault((r.model, r.method, r.threshold, r.condition, r.metric), []).append(r)
    for grp in groups.values():
        max(grp, key=lambda r: (r.mean, -r.index)).best = True
    summary = GridSummary(rows)
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / "grid.csv").write_text(summary.to_csv(), encoding="utf-8")
    return summary


# -- latency ------------------------------------------------------------------------

def frame_latency(model: M.FrameClassifier, repeats: int = 1000, seed: int = 0) -> float:
    """Median wall time in seconds of one single-frame forward pass."""
    rng = np.random.default_rng(seed)
    frame = rng.normal(0.0, 0.05, size=model.input_dim)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        M.forward_frame(model, frame)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)
