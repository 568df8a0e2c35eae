"""Command-line driver: train, run, bench, eval, synthgen.

Every EngineConfig field is exposed as a flag of the same name; precedence
is flag > config file > built-in default. Exit codes: 0 success, 1 usage or
configuration error, 2 bad input data, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import backend as backend_mod
from .cascade import STATS_FIELDS, run_sequence
from .config import EngineConfig, _parse_value, build_config
from .errors import (
    CogbgError,
    ConfigError,
    DataError,
    InternalError,
    UsageError,
)
from .evaluation import (
    ConfusionCounts,
    compare_models,
    confusion_counts,
    f_measure,
    measure_level_costs,
    speedup_estimate,
    write_population_csv,
)
from .frame_io import (
    load_ground_truth,
    load_sequence,
    parse_manifest,
    write_mask,
)
from .model_io import load_model, save_model
from .synthgen import materialize, parse_spec_file
from .training import train_engine, training_summary

MASK_PATTERN = "mask_%06d.png"


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("engine config overrides")
    for f in dataclasses.fields(EngineConfig):
        flag = "--" + f.name
        if f.type == "bool":
            group.add_argument(flag, action=argparse.BooleanOptionalAction,
                               default=None)
        elif f.type == "int":
            group.add_argument(flag, type=int, default=None)
        elif f.type == "float":
            group.add_argument(flag, type=float, default=None)
        elif f.type == "Triple":
            group.add_argument(flag, metavar="A,B,C", default=None,
                               type=lambda s, n=f.name: _parse_value(n, s))
        else:
            group.add_argument(flag, default=None)


def _config_from(args: argparse.Namespace) -> EngineConfig:
    names = {f.name for f in dataclasses.fields(EngineConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    return build_config(file=args.config, overrides=overrides)


def _training_frames(manifest, config: EngineConfig) -> EngineConfig:
    """The manifest's declared training split wins over the config's."""
    if manifest.training_count < 2:
        raise DataError("training needs at least 2 frames, manifest "
                        f"declares {manifest.training_count}")
    return replace(config, training_frames=manifest.training_count)


# ------------------------------------------------------------ subcommands


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    manifest = parse_manifest(args.manifest)
    cfg = _training_frames(manifest, cfg)
    frames = list(load_sequence(manifest, color=cfg.color,
                                stop=cfg.training_frames))
    engine = train_engine(frames, cfg)
    save_model(engine, args.model)
    summary = training_summary(engine)
    print(f"model written to {args.model}")
    for key, val in summary.items():
        if isinstance(val, float):
            print(f"{key:<24}{val:.4f}")
        else:
            print(f"{key:<24}{val}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    manifest = parse_manifest(args.manifest)
    cfg = _training_frames(manifest, cfg)
    engine = load_model(args.model, cfg)
    backend_mod.set_workers(cfg.workers)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    frames = load_sequence(manifest, color=cfg.color,
                           start=cfg.training_frames)
    masks, stats = run_sequence(engine, frames)
    if not stats:
        raise DataError("no frames past the training split to process")
    start = cfg.training_frames
    for i, mask in enumerate(masks):
        write_mask(mask, outdir / (MASK_PATTERN % (start + i)))
    with open(outdir / "stats.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(STATS_FIELDS)
        writer.writerows(row.as_row() for row in stats)
    costs = measure_level_costs(backend=engine.backend)
    report = speedup_estimate(stats, costs)
    fg = sum(r.n_foreground for r in stats) / (len(stats) * engine.n_pix)
    print(f"processed {len(stats)} frames -> {outdir}")
    print(f"foreground fraction     {fg:.4f}")
    print(f"analytic speedup        {report.analytic:.2f}x")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    manifest = parse_manifest(args.manifest)
    report = compare_models(manifest, cfg, runs=args.runs,
                            warmup=args.warmup)
    print(report.to_text())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_json(), indent=2)
                                   + "\n")
    if args.population_csv:
        write_population_csv(args.population_csv, report.stats)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    manifest = parse_manifest(args.manifest)
    masks_dir = Path(args.masks)
    if not manifest.ground_truth:
        raise DataError(f"{args.manifest}: manifest lists no ground truth")
    total = ConfusionCounts(0, 0, 0, 0)
    rows = []
    for idx, gt_path in manifest.ground_truth:
        mask_path = masks_dir / (args.pattern % idx)
        if not mask_path.exists():
            continue  # typically a training frame with no emitted mask
        pred = load_ground_truth(mask_path)
        truth = load_ground_truth(gt_path)
        c = confusion_counts(pred, truth)
        total += c
        rows.append((idx, c))
    if not rows:
        raise DataError(f"no masks matching {args.pattern!r} under "
                        f"{masks_dir} line up with the ground truth")
    print("frame  precision  recall      F1")
    for idx, c in rows:
        p, r, f1 = f_measure(c)
        print(f"{idx:>5}  {p:>9.4f}  {r:>6.4f}  {f1:>6.4f}")
    p, r, f1 = f_measure(total)
    print(f"total  {p:>9.4f}  {r:>6.4f}  {f1:>6.4f}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("frame", "tp", "fp", "tn", "fn", "excluded",
                             "precision", "recall", "f1"))
            for idx, c in rows:
                pr, rc, ff = f_measure(c)
                writer.writerow((idx, c.tp, c.fp, c.tn, c.fn, c.excluded,
                                 f"{pr:.6f}", f"{rc:.6f}", f"{ff:.6f}"))
    return 0


def cmd_synthgen(args: argparse.Namespace) -> int:
    spec = parse_spec_file(args.spec)
    manifest_path = materialize(spec, args.out)
    print(f"dataset written: {manifest_path}")
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogbg",
        description="Cascade-of-Gaussians background subtraction")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--manifest", required=True,
                       help="dataset manifest file")
        p.add_argument("--config", default=None,
                       help="key = value config file")
        _add_config_flags(p)

    p_train = sub.add_parser("train", help="train a model from a dataset")
    common(p_train)
    p_train.add_argument("--model", default="model.cog",
                         help="output model file")
    p_train.set_defaults(func=cmd_train)

    p_run = sub.add_parser("run", help="segment frames past the training "
                                       "split")
    common(p_run)
    p_run.add_argument("--model", required=True, help="trained model file")
    p_run.add_argument("--out", required=True,
                       help="output directory for masks and stats.csv")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="head-to-head cascade vs "
                                           "baseline mixture")
    common(p_bench)
    p_bench.add_argument("--runs", type=int, default=5,
                         help="timed repetitions (fastest wins)")
    p_bench.add_argument("--warmup", type=int, default=0,
                         help="frames run untimed first so sampling clocks "
                              "reach steady state")
    p_bench.add_argument("--json", default=None, help="write report JSON")
    p_bench.add_argument("--population-csv", default=None,
                         help="write per-frame level-population fractions")
    p_bench.set_defaults(func=cmd_bench)

    p_eval = sub.add_parser("eval", help="score saved masks against the "
                                         "manifest's ground truth")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--masks", required=True,
                        help="directory of predicted masks")
    p_eval.add_argument("--pattern", default=MASK_PATTERN,
                        help="mask filename pattern (printf style)")
    p_eval.add_argument("--out", default=None, help="write per-frame CSV")
    p_eval.set_defaults(func=cmd_eval)

    p_gen = sub.add_parser("synthgen", help="materialize a synthetic "
                                            "dataset from a spec file")
    p_gen.add_argument("--spec", required=True, help="synthetic scene spec")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=cmd_synthgen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; the documented code is 1
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InternalError, CogbgError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
