"""Command-line entry point: micropump-rbf <command> [options]."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, load_config
from .training import TrainingDiverged


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    p.add_argument("--seed", type=int, help="override the plant, data and train seeds")
    p.add_argument("--out", type=Path, help="output directory (default: config 'out')")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="micropump-rbf", description="RBF overlap-angle tuning for a dual-plunger micropump.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="sample and label the operating-point dataset")
    sub.add_parser("calibrate", parents=[common], help="recover the correction table from a simulated dispenser")

    p = sub.add_parser("train", parents=[common], help="cluster, initialize and train the network")
    p.add_argument("--dataset", type=Path, help="dataset CSV (default: OUT/dataset.csv)")
    p.add_argument("--mode", choices=sorted(pipeline.MODE_ALIASES), default="both")
    p.add_argument("--k", type=int, help="number of hidden nodes")

    p = sub.add_parser("evaluate", parents=[common], help="compare strategies per cluster on the test split")
    p.add_argument("--models", type=Path, nargs="+", help="model files (default: trained models in OUT)")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--clusters", type=Path)
    p.add_argument("--fixed-angle", type=float, help="benchmark angle in degrees (default 30)")

    p = sub.add_parser("predict", parents=[common], help="predict overlap angles")
    p.add_argument("--model", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", type=float, nargs=4, metavar=("MU", "P", "OMEGA", "Q"))
    src.add_argument("--csv", type=Path, help="CSV with mu_cP, back_pressure_MPa, omega_rev_min, valve_flow_mL_min")
    p.add_argument("--period", type=float, help="pump period in seconds; adds an overlap-time column")

    sub.add_parser("report", parents=[common], help="collect the tables of a run directory")

    p = sub.add_parser("run", parents=[common], help="generate, train, evaluate and report in one go")
    p.add_argument("--mode", choices=sorted(pipeline.MODE_ALIASES), default="both")
    p.add_argument("--k", type=int)
    p.add_argument("--fixed-angle", type=float)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "k", None) is not None:
        cfg = dataclasses.replace(cfg, k=args.k)
    return cfg


def _dispatch(args) -> int:
    if args.command == "predict":
        sys.stdout.write(pipeline.cmd_predict(args.model, args.features, args.csv, args.period))
        return 0
    cfg = _config(args)
    out = args.out if args.out is not None else Path(cfg.out)
    if args.command == "generate":
        ds = pipeline.cmd_generate(cfg, out)
        print(f"wrote {out / 'dataset.csv'} ({len(ds)} rows, split {'/'.join(map(str, ds.counts()))})")
    elif args.command == "calibrate":
        pipeline.cmd_calibrate(cfg, out)
        sys.stdout.write((out / "calibration.txt").read_text())
    elif args.command == "train":
        models = pipeline.cmd_train(cfg, args.dataset or out / "dataset.csv", args.mode, out)
        for mode in models:
            print(f"wrote {out / pipeline.MODEL_FILES[mode]}")
        sys.stdout.write((out / "centers.txt").read_text())
    elif args.command == "evaluate":
        paths = args.models or [out / f for f in pipeline.MODEL_FILES.values() if (out / f).exists()]
        if not paths:
            raise FileNotFoundError(f"no model files in {out}")
        pipeline.cmd_evaluate(
            cfg, paths, args.dataset or out / "dataset.csv", args.clusters or out / "clusters.json", out, args.fixed_angle
        )
        sys.stdout.write((out / "evaluation.txt").read_text())
    elif args.command == "report":
        sys.stdout.write(pipeline.cmd_report(out))
    elif args.command == "run":
        pipeline.cmd_run(cfg, out, args.mode, args.fixed_angle)
        sys.stdout.write((out / "report.txt").read_text())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc} (partial artifacts flagged in the train report)", file=sys.stderr)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
