"""Command-line front end.

Subcommands: synth, preprocess, epoch, train, explain, stats, report, run.
Flags can be overridden wholesale by --config FILE (JSON with pipeline
config keys). Exit codes: 0 success, 2 config error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, epochs as epochs_mod, stats, synth
from .model import DatasetFormatError, load_dataset, save_dataset
from .pipeline import (
    PipelineConfig,
    PipelineError,
    epochs_from_dataset,
    preprocess_dataset,
    run_pipeline,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_preprocess_flags(p: argparse.ArgumentParser):
    p.add_argument("--low-cut", type=float, default=0.05, help="band-pass low cutoff (Hz)")
    p.add_argument("--high-cut", type=float, default=0.7, help="band-pass high cutoff (Hz)")
    p.add_argument("--filter-order", type=int, default=4, help="band-pass order (even)")
    p.add_argument("--no-short-channel", action="store_true", help="skip short-channel regression")
    p.add_argument("--no-motion", action="store_true", help="skip motion correction")
    p.add_argument("--motion-amp-sigma", type=float, default=5.0)
    p.add_argument("--motion-iqr", type=float, default=1.5)


def _add_learn_flags(p: argparse.ArgumentParser):
    p.add_argument("--task", default="single", help="task label to analyze")
    p.add_argument("--model", default="knn", choices=["knn", "rf", "svm", "gbdt"])
    p.add_argument("--folds", type=int, default=6)
    p.add_argument("--feature-mode", default="raw", choices=["raw", "summary"])
    p.add_argument("--select-k", type=int, default=None)
    p.add_argument("--window", type=float, default=20.0, help="epoch window (s)")


def _add_synth_flags(p: argparse.ArgumentParser):
    p.add_argument("--patients", type=int, default=12)
    p.add_argument("--controls", type=int, default=12)
    p.add_argument("--trials", type=int, default=5, help="trials per task")
    p.add_argument("--effect-channels", nargs="*", default=[])
    p.add_argument("--amplitude-ratio", type=float, default=1.0)
    p.add_argument("--peak-delay", type=float, default=0.0)
    p.add_argument("--effect-chromophore", default="hbr", choices=["hbo", "hbr"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nirscope",
        description="fNIRS preprocessing, classification, attribution, and statistics",
    )
    parser.add_argument("--version", action="version", version=f"nirscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    _add_synth_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("preprocess", help="raw intensities to hemoglobin series")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_preprocess_flags(p)

    p = sub.add_parser("epoch", help="segment a preprocessed dataset and summarize")
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", default="single")
    p.add_argument("--window", type=float, default=20.0)

    p = sub.add_parser("train", help="cross-participant validation metrics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_preprocess_flags(p)
    _add_learn_flags(p)

    p = sub.add_parser("explain", help="train, then rank channels by attribution")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=256, help="attribution sample budget")
    _add_preprocess_flags(p)
    _add_learn_flags(p)

    p = sub.add_parser("stats", help="t-test / ANOVA / Levene on samples or summaries")
    p.add_argument("test", choices=["ttest", "anova", "levene"])
    p.add_argument("--csv", nargs="*", default=[], help="one-column sample CSVs, one per group")
    p.add_argument(
        "--summary",
        action="append",
        default=[],
        metavar="N,MEAN,SD",
        help="one group summary as a comma triple; repeat per group",
    )
    p.add_argument("--welch", action="store_true", help="unequal-variance t-test")
    p.add_argument("--center", default="mean", choices=["mean", "median"])

    p = sub.add_parser("report", help="descriptive figures without training")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--task", default="single")
    p.add_argument("--window", type=float, default=20.0)
    _add_preprocess_flags(p)

    p = sub.add_parser("run", help="full pipeline (synthetic unless --dataset)")
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--pool", default="sample", choices=["sample", "trial"])
    p.add_argument("--config", default=None, help="JSON config overriding flags")
    _add_synth_flags(p)
    _add_preprocess_flags(p)
    _add_learn_flags(p)
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig(
        out_dir=args.out,
        dataset_path=args.dataset,
        seed=getattr(args, "seed", 0),
        patients=getattr(args, "patients", 12),
        controls=getattr(args, "controls", 12),
        trials_per_task=getattr(args, "trials", 5),
        effect_channels=tuple(getattr(args, "effect_channels", ())),
        amplitude_ratio=getattr(args, "amplitude_ratio", 1.0),
        peak_delay_s=getattr(args, "peak_delay", 0.0),
        effect_chromophore=getattr(args, "effect_chromophore", "hbr"),
        low_cut_hz=args.low_cut,
        high_cut_hz=args.high_cut,
        filter_order=args.filter_order,
        short_channel=not args.no_short_channel,
        motion_correction=not args.no_motion,
        motion_amp_sigma=args.motion_amp_sigma,
        motion_iqr=args.motion_iqr,
        window_s=args.window,
        task=args.task,
        model=args.model,
        folds=args.folds,
        feature_mode=args.feature_mode,
        select_k=args.select_k,
        shap_samples=getattr(args, "samples", 256),
        pool=getattr(args, "pool", "sample"),
    )
    if getattr(args, "config", None):
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        known = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "effect_channels" in overrides:
            overrides["effect_channels"] = tuple(overrides["effect_channels"])
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _parse_summaries(raw: list[str]) -> list[stats.GroupSummary]:
    out = []
    for triple in raw:
        parts = triple.split(",")
        if len(parts) != 3:
            raise ValueError(f"--summary expects N,MEAN,SD, got {triple!r}")
        out.append(
            stats.GroupSummary(n=int(parts[0]), mean=float(parts[1]), sd=float(parts[2]))
        )
    return out


def _load_sample_csvs(paths: list[str]) -> list[np.ndarray]:
    groups = []
    for path in paths:
        values = [
            float(line)
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        groups.append(np.asarray(values))
    return groups


def _cmd_stats(args) -> int:
    summaries = _parse_summaries(args.summary)
    groups = _load_sample_csvs(args.csv)
    if summaries and groups:
        raise ValueError("give either --summary or --csv, not both")
    if args.test == "ttest":
        if summaries:
            if len(summaries) != 2:
                raise ValueError("ttest needs exactly 2 groups")
            res = stats.t_test_from_summary(
                summaries[0], summaries[1], equal_variance=not args.welch
            )
        elif len(groups) == 2:
            res = stats.t_test(groups[0], groups[1], equal_variance=not args.welch)
        else:
            raise ValueError("ttest needs exactly 2 groups")
        print(
            f"t = {res.statistic:.6g}, df = {res.df:.6g}, "
            f"p = {res.p_two_sided:.6g}, mean difference = {res.mean_difference:.6g}"
        )
    elif args.test == "anova":
        res = (
            stats.one_way_anova_from_summary(summaries)
            if summaries
            else stats.one_way_anova(groups)
        )
        print(
            f"F = {res.statistic:.6g}, df = ({res.df[0]:.6g}, {res.df[1]:.6g}), "
            f"p = {res.p_two_sided:.6g}"
        )
    else:
        if not groups:
            raise ValueError("levene needs raw sample CSVs")
        res = stats.levene(groups, center=args.center)
        print(
            f"F = {res.statistic:.6g}, df = ({res.df[0]:.6g}, {res.df[1]:.6g}), "
            f"p = {res.p_two_sided:.6g}"
        )
    return EXIT_OK


def _cmd_synth(args) -> int:
    effect = None
    if args.effect_channels:
        weights = {"hbo": 0.0, "hbr": 0.0}
        weights[args.effect_chromophore] = 1.0
        effect = synth.EffectSpec(
            target_channels=tuple(args.effect_channels),
            amplitude_ratio=args.amplitude_ratio,
            peak_delay_s=args.peak_delay,
            chromophore_weights=weights,
        )
    dataset, gt = synth.generate_dataset(
        n_patients=args.patients,
        n_controls=args.controls,
        trials_per_task=args.trials,
        effect=effect,
        seed=args.seed,
    )
    save_dataset(dataset, args.out)
    out = Path(args.out)
    (out / "ground_truth.json").write_text(
        synth.ground_truth_report(gt), encoding="utf-8", newline="\n"
    )
    print(f"wrote {len(dataset.recordings)} recordings to {out}")
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    cfg = PipelineConfig(
        out_dir=args.out,
        dataset_path=args.dataset,
        low_cut_hz=args.low_cut,
        high_cut_hz=args.high_cut,
        filter_order=args.filter_order,
        short_channel=not args.no_short_channel,
        motion_correction=not args.no_motion,
        motion_amp_sigma=args.motion_amp_sigma,
        motion_iqr=args.motion_iqr,
    )
    dataset = load_dataset(args.dataset)
    hemo = preprocess_dataset(dataset, cfg)
    save_dataset(hemo, args.out)
    print(f"wrote preprocessed dataset ({len(hemo.hemo)} participants) to {args.out}")
    return EXIT_OK


def _cmd_epoch(args) -> int:
    dataset = load_dataset(args.dataset)
    cfg = PipelineConfig(dataset_path=args.dataset, task=args.task, window_s=args.window)
    epoch_set = epochs_from_dataset(dataset, cfg)
    task_set = epoch_set.filter(task=args.task)
    print(
        f"{len(epoch_set.epochs)} epochs total, {len(task_set.epochs)} for task "
        f"{args.task!r}, window {epoch_set.window_samples} samples "
        f"@ {epoch_set.sample_rate_hz} Hz"
    )
    for group in ("control", "patient"):
        try:
            avg = epochs_mod.block_average(epoch_set, args.task, group=group)
        except ValueError:
            continue
        peak = float(np.max(np.abs(avg.hbo_mean)))
        print(f"  {group}: {avg.n_trials} trials, max |hbo mean| = {peak:.3e} mol/L")
    return EXIT_OK


def _preprocess_config(args, out_dir: str = "nirscope-run") -> PipelineConfig:
    return PipelineConfig(
        out_dir=out_dir,
        dataset_path=args.dataset,
        seed=getattr(args, "seed", 0),
        low_cut_hz=args.low_cut,
        high_cut_hz=args.high_cut,
        filter_order=args.filter_order,
        short_channel=not args.no_short_channel,
        motion_correction=not args.no_motion,
        motion_amp_sigma=args.motion_amp_sigma,
        motion_iqr=args.motion_iqr,
        window_s=getattr(args, "window", 20.0),
        task=getattr(args, "task", "single"),
        model=getattr(args, "model", "knn"),
        folds=getattr(args, "folds", 6),
        feature_mode=getattr(args, "feature_mode", "raw"),
        select_k=getattr(args, "select_k", None),
        shap_samples=getattr(args, "samples", 256),
    )


def _cmd_train(args) -> int:
    from . import learn
    from .features import FeatureMode
    from .report import metrics_table

    cfg = _preprocess_config(args)
    dataset = preprocess_dataset(load_dataset(args.dataset), cfg)
    epoch_set = epochs_from_dataset(dataset, cfg)
    plan = learn.make_fold_plan(dataset.participants, n_folds=cfg.folds, seed=cfg.seed)
    cv = learn.cross_validate(
        epoch_set,
        cfg.task,
        cfg.classifier_spec(),
        plan,
        mode=FeatureMode(cfg.feature_mode),
        select_k=cfg.select_k,
    )
    rows = [(f"fold {fr.fold_index}", fr.metrics) for fr in cv.folds]
    rows.append(("pooled", cv.pooled))
    print(
        f"model = {cfg.model}, task = {cfg.task}, mode = {cfg.feature_mode}, "
        f"k = {cv.select_k}, folds = {cfg.folds}, seed = {cfg.seed}\n"
    )
    print(metrics_table(rows, ("fold", "accuracy", "precision", "recall", "f1")))
    return EXIT_OK


def _cmd_run(args, with_reports: bool = True) -> int:
    cfg = _config_from_args(args)
    result = run_pipeline(cfg)
    pooled = result["cv"].pooled
    print(
        f"pooled accuracy = {pooled.accuracy:.4f} (precision {pooled.precision:.4f}, "
        f"recall {pooled.recall:.4f}, f1 {pooled.f1:.4f})"
    )
    if with_reports:
        for path in result["files"]:
            print(f"wrote {path}")
    top = result["importance"].top(4)
    print("top channels: " + ", ".join(f"{c} {h}" for c, h, _ in top))
    return EXIT_OK


def _cmd_explain(args) -> int:
    return _cmd_run(args, with_reports=True)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "preprocess":
            return _cmd_preprocess(args)
        if args.command == "epoch":
            return _cmd_epoch(args)
        if args.command == "report":
            from .pipeline import descriptive_report

            cfg = _preprocess_config(args, out_dir=args.out)
            for path in descriptive_report(cfg):
                print(f"wrote {path}")
            return EXIT_OK
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "explain":
            return _cmd_explain(args)
        if args.command == "run":
            return _cmd_run(args)
        parser.error(f"unknown command {args.command}")
        return EXIT_CONFIG
    except DatasetFormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as e:
        cause = e.cause
        if isinstance(cause, DatasetFormatError):
            print(f"data error: {e}", file=sys.stderr)
            return EXIT_DATA
        if isinstance(cause, (np.linalg.LinAlgError, ArithmeticError, FloatingPointError)):
            print(f"numerical failure: {e}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
