"""Command-line entry points, one subcommand per pipeline stage.

Failures exit nonzero after printing a single JSON line to stderr:
``{"error": "<kind>", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evaluation as ev
from . import models as M
from . import pipeline as P
from .dataset import SynthConfig, generate_synthetic, save_dataset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_flags() -> argparse.ArgumentParser:
    g = _Parser(add_help=False)
    g.add_argument("--seed", type=int, default=None, help="override the configured seed")
    g.add_argument("--config", type=Path, default=None, help="JSON config file")
    g.add_argument("--out", type=Path, default=None,
                   help=f"output file or directory (default: config output_dir, then ${P.OUT_ENV})")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="compmotion", description="Weakly supervised frame-level compensation detection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset (JSONL)")
    p.set_defaults(func=cmd_synth)

    fold_help = "held-out subject id of the fold"
    for name, func, text in [
        ("train-video", cmd_train_video, "train Model A for one fold"),
        ("saliency", cmd_saliency, "pseudo-scores on the fold's training videos"),
        ("pseudolabel", cmd_pseudolabel, "threshold pseudo-scores into frame labels"),
        ("train-frame", cmd_train_frame, "train Model B per condition and evaluate the fold"),
    ]:
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--fold", required=True, help=fold_help)
        if name == "saliency":
            p.add_argument("--no-maps", action="store_true", help="skip writing full saliency maps")
            p.add_argument("--maps", action="store_true", help="write full saliency maps")
        p.set_defaults(func=func)

    p = sub.add_parser("loso", parents=[common], help="run every LOSO fold and write the report")
    p.add_argument("--jobs", type=int, default=1, help="folds run in parallel")
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("grid", parents=[common], help="run the hyperparameter grid around a base config")
    p.add_argument("--jobs", type=int, default=1, help="folds run in parallel within each grid point")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", parents=[common], help="aggregate fold results found under a directory")
    p.add_argument("--in", dest="inp", type=Path, required=True, help="directory holding fold_result.json files")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_report)
    return parser


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc


def _run_config(args) -> P.RunConfig:
    if args.config is None:
        raise UsageError("--config <run config JSON> is required")
    cfg = P.load_run_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out_dir(args, cfg: P.RunConfig) -> Path:
    out = P.resolve_out(cfg, args.out)
    if out is None:
        raise UsageError(f"no output directory: pass --out, set output_dir, or set ${P.OUT_ENV}")
    return out


def _stage_setup(args):
    cfg = _run_config(args)
    out = _out_dir(args, cfg)
    prep = P.prepare(cfg)
    if args.fold not in prep.dataset.subjects:
        raise ValueError(f"unknown fold {args.fold!r}; subjects are {list(prep.dataset.subjects)}")
    out.mkdir(parents=True, exist_ok=True)
    (out / P.RUN_CONFIG_FILE).write_text(cfg.to_json(), encoding="utf-8")
    return cfg, out, prep


def _model_a(out: Path, subject: str) -> M.VideoClassifier:
    path = P.fold_dir(out, subject) / "model_a.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run train-video first")
    return M.load_checkpoint(path)


def cmd_synth(args) -> None:
    cfg = SynthConfig()
    if args.config is not None:
        doc = _read_json(args.config)
        # accept a bare SynthConfig or a run config carrying a "synth" block
        cfg = SynthConfig.from_dict(doc["synth"] if isinstance(doc.get("synth"), dict) else doc)
    if args.seed is not None:
        cfg = SynthConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    out = args.out
    if out is None:
        raise UsageError("--out <dataset.jsonl> is required")
    out.parent.mkdir(parents=True, exist_ok=True)
    ds = generate_synthetic(cfg)
    save_dataset(ds, out)
    print(json.dumps({"dataset": str(out), "n_videos": len(ds.videos), "subjects": len(ds.subjects)}))


def cmd_train_video(args) -> None:
    cfg, out, prep = _stage_setup(args)
    P.stage_train_video(cfg, prep, args.fold, out)
    print(json.dumps({"checkpoint": str(P.fold_dir(out, args.fold) / "model_a.json")}))


def cmd_saliency(args) -> None:
    cfg, out, prep = _stage_setup(args)
    export = cfg.export_maps
    if args.maps:
        export = True
    if args.no_maps:
        export = False
    scorings = P.stage_saliency(cfg, prep, args.fold, _model_a(out, args.fold), out, export_maps=export)
    print(json.dumps({"scored": sum(sc.scores is not None for sc in scorings), "videos": len(scorings)}))


def cmd_pseudolabel(args) -> None:
    cfg, out, prep = _stage_setup(args)
    labels, spec, info = P.stage_pseudolabel(cfg, prep, args.fold, P.read_scorings(out, args.fold), out)
    print(json.dumps({"threshold": spec.to_dict(), "calibrated": info.get("calibrated", False),
                      "videos": len(labels)}))


def cmd_train_frame(args) -> None:
    cfg, out, prep = _stage_setup(args)
    labels = spec = None
    if ev.PSEUDO in cfg.conditions:
        labels, spec = P.read_pseudo_stage(out, args.fold)
    results = P.stage_train_frame(cfg, prep, args.fold, _model_a(out, args.fold), labels, spec, out)
    for r in results:
        print(json.dumps({"condition": r.condition, "video_auc": r.video_auc, "frame_auc": r.frame_auc}))


def cmd_loso(args) -> None:
    cfg = _run_config(args)
    out = _out_dir(args, cfg)
    outcome = P.run_loso(cfg, out, jobs=args.jobs)
    sys.stdout.write(outcome.report.to_text())
    if outcome.failures and not outcome.results:
        raise RuntimeError(f"all {len(outcome.failures)} folds failed")


def cmd_grid(args) -> None:
    cfg = _run_config(args)
    out = _out_dir(args, cfg)
    summary = P.run_grid(P.expand_grid(cfg), out, jobs=args.jobs)
    sys.stdout.write(summary.to_csv())


def cmd_report(args) -> None:
    results, failures = P.collect_fold_results(args.inp)
    report = ev.aggregate_report(results, failures)
    if args.format == "csv":
        text = report.to_csv()
    elif args.format == "json":
        text = ev.report_to_json(report) + "\n"
    else:
        text = report.to_text()
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except FileNotFoundError as exc:
        return _fail("missing_file", str(exc), 1)
    except Exception as exc:  # noqa: BLE001 - reported as a JSON line
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
