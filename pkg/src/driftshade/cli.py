"""Command-line entry point.

Subcommands: train, attack, drift, sweep, and the bundled studies
repro-rq1 / repro-rq2 / repro-rq3. Exit codes: 0 success, 1 runtime
failure with a diagnostic on stderr, 2 usage error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import CsvFormatError, SplitSpec, split_dataset
from .drift import DriftReport, compare_prob_samples
from .harness import (
    _build_dataset,
    emit_report,
    load_config,
    load_prob_csv,
    run_experiment,
    run_sweep,
    sweep_spec_from_json,
    thresholds_from_json,
)
from .mlp import MlpClassifier, ModelFormatError
from .repro import run_rq1, run_rq2, run_rq3

__all__ = ["main", "build_parser"]

FORMATS = ("csv", "markdown", "json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftshade",
        description=(
            "Train a tabular malware classifier, craft similarity-"
            "constrained evasion attacks against it, and score the "
            "resulting output-probability drift."
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(sp, config_required=True):
        if config_required:
            sp.add_argument("--config", required=True, help="JSON config path")
        else:
            sp.add_argument("--config", help="JSON config path")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="override the global seed")
        sp.add_argument("--format", choices=FORMATS, default="csv",
                        help="report format (csv is always written)")

    sp = sub.add_parser("train", help="fit a classifier and save it")
    common(sp)
    sp.add_argument("--model", help="where to save the model "
                                    "(default <out>/model.npz)")
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("attack", help="run the config's attacks against a "
                                       "saved model")
    common(sp)
    sp.add_argument("--model", required=True, help="saved model path")
    sp.set_defaults(func=_cmd_attack)

    sp = sub.add_parser("drift", help="compare two probability CSV files")
    sp.add_argument("reference", help="reference probability CSV")
    sp.add_argument("current", help="current probability CSV")
    common(sp, config_required=False)
    sp.set_defaults(func=_cmd_drift)

    sp = sub.add_parser("sweep", help="run the config's sweep section")
    common(sp)
    sp.set_defaults(func=_cmd_sweep)

    for name, runner in (("repro-rq1", _cmd_rq1), ("repro-rq2", _cmd_rq2),
                         ("repro-rq3", _cmd_rq3)):
        sp = sub.add_parser(name, help=f"run the bundled {name[-3:]} study")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=FORMATS, default="csv")
        sp.set_defaults(func=runner)

    return parser


def _out_dir(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def _emit_extra(result, fmt: str) -> None:
    if fmt != "csv":
        emit_report(result, fmt)


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = _out_dir(args, "driftshade-out")
    out.mkdir(parents=True, exist_ok=True)
    dataset = _build_dataset(cfg["data"])
    split = SplitSpec(cfg["split"]["train"], cfg["split"]["val"],
                      cfg["split"]["test"], cfg["split"]["seed"])
    train_ds, val_ds, test_ds = split_dataset(dataset, split)
    model = MlpClassifier(**cfg["train"])
    model.fit(train_ds.features, train_ds.labels,
              validation=(val_ds.features, val_ds.labels))
    metrics = model.evaluate(test_ds.features, test_ds.labels)
    path = Path(args.model) if args.model else out / "model.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    print(f"trained model: test accuracy {metrics['accuracy']:.4f}, "
          f"epochs {model.n_epochs_} (best {model.best_epoch_})")
    print(f"saved: {path}")
    return 0


def _cmd_attack(args) -> int:
    cfg = load_config(args.config, args.seed)
    model = MlpClassifier.load(args.model)
    out = _out_dir(args, "driftshade-out")
    result = run_experiment(cfg, out, model=model)
    _emit_extra(result, args.format)
    print(f"wrote report for {len(result.rows)} attacks: {out / 'report.csv'}")
    return 0


def _cmd_drift(args) -> int:
    ref = load_prob_csv(args.reference)
    cur = load_prob_csv(args.current)
    n_bins, thresholds = 10, None
    if args.config:
        cfg = load_config(args.config, args.seed)
        n_bins = cfg["drift"]["n_bins"]
        thresholds = thresholds_from_json(cfg["drift"]["thresholds"])
    report = compare_prob_samples(ref, cur, n_bins, thresholds)
    summary = " ".join(f"{name}={report.metric(name):.6g}"
                       for name in ("jsd", "hellinger", "wasserstein",
                                    "mmd", "ks", "psi"))
    detected = ";".join(report.detected_by) or "none"
    print(f"{summary} detected={detected}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_drift_report(report, out, args.format)
        print(f"wrote: {out}")
    return 0


def _write_drift_report(report: DriftReport, out: Path, fmt: str) -> None:
    if fmt == "csv":
        (out / "drift.csv").write_text(
            DriftReport.CSV_HEADER + "\n" + report.to_csv_row() + "\n",
            encoding="utf-8")
    elif fmt == "json":
        import json

        (out / "drift.json").write_text(
            json.dumps(report.to_json_dict(), indent=2) + "\n",
            encoding="utf-8")
    else:
        names = DriftReport.CSV_HEADER.split(",")
        row = report.to_csv_row().split(",")
        lines = ["| " + " | ".join(names) + " |",
                 "|" + "|".join(" --- " for _ in names) + "|",
                 "| " + " | ".join(row) + " |"]
        (out / "drift.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.seed)
    if "sweep" not in cfg:
        raise ValueError("config has no sweep section")
    spec = sweep_spec_from_json(cfg["sweep"])
    out = _out_dir(args, "driftshade-out")
    result = run_sweep(cfg, spec, out)
    _emit_extra(result, args.format)
    print(f"swept {spec.param} over {len(spec.values)} values: "
          f"{out / 'report.csv'}")
    return 0


def _cmd_rq1(args) -> int:
    out = _out_dir(args, "repro-rq1-out")
    result = run_rq1(out, args.seed)
    _emit_extra(result, args.format)
    print(f"rq1: {len(result.rows)} attacks at the fixed operating point -> "
          f"{out / 'report.csv'}")
    return 0


def _cmd_rq2(args) -> int:
    out = _out_dir(args, "repro-rq2-out")
    result = run_rq2(out, args.seed)
    _emit_extra(result, args.format)
    print(f"rq2: {len(result.rows)} optimizer/objective rows -> "
          f"{out / 'report.csv'}")
    return 0


def _cmd_rq3(args) -> int:
    out = _out_dir(args, "repro-rq3-out")
    results = run_rq3(out, args.seed)
    for name, result in results.items():
        _emit_extra(result, args.format)
        print(f"rq3 {name} sweep: {len(result.rows)} rows -> "
              f"{out / name / 'report.csv'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError, CsvFormatError, ModelFormatError) as exc:
        print(f"driftshade: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
