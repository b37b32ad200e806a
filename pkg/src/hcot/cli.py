"""Command-line experiment runner.

Subcommands: train, compare, ablate-nc, eval, export-embeddings.
Exit codes: 0 success, 2 invalid config, 3 missing data, 4 numerical
failure during training.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .data import DataFormatError
from .hierarchy import HierarchyError
from .network import NetworkError
from .trainer import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config file (YAML)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--objective", choices=["xe", "cot", "hcot"], help="training objective")
    parser.add_argument("--schedule", choices=["direct", "alternating"], help="update schedule")
    parser.add_argument(
        "--hierarchy",
        help="hierarchy file path, or data / none / builtin:flat / builtin:identity",
    )
    parser.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcot",
        description="Train and evaluate hierarchical complement objectives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training experiment")
    _add_common(train)

    compare = sub.add_parser("compare", help="run xe, cot, and hcot on identical data")
    _add_common(compare)

    ablate = sub.add_parser("ablate-nc", help="sweep the number of coarse groups")
    _add_common(ablate)
    ablate.add_argument(
        "--granularities",
        help="comma-separated coarse-group counts, e.g. 1,3,9 (overrides config)",
    )

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(evaluate)
    evaluate.add_argument("--checkpoint", required=True, help="checkpoint file to load")

    export = sub.add_parser("export-embeddings", help="write penultimate-layer activations")
    _add_common(export)
    export.add_argument("--checkpoint", required=True, help="checkpoint file to load")
    export.add_argument("--split", choices=["train", "test"], default="test")

    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if args.out is not None:
        overrides["output"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.objective is not None:
        overrides["objective"] = args.objective
    if args.schedule is not None:
        overrides["schedule"] = args.schedule
    if args.hierarchy is not None:
        overrides["hierarchy"] = args.hierarchy
    if getattr(args, "granularities", None):
        overrides["granularities"] = [int(g) for g in args.granularities.split(",")]
    return overrides


def _cmd_train(args: argparse.Namespace) -> int:
    from .experiment import run_experiment

    cfg = load_config(args.config, _overrides(args))
    result = run_experiment(cfg, force=args.force, render=not args.no_figures)
    final = result.records[-1]
    print(
        f"{cfg.train.objective}/{cfg.train.schedule}: "
        f"fine_error={final.fine_error:.4f} coarse_error={final.coarse_error:.4f} "
        f"gap={result.gap:.6f} -> {result.out_dir}"
    )
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    from .experiment import run_compare

    cfg = load_config(args.config, _overrides(args))
    rows = run_compare(cfg, force=args.force, render=not args.no_figures)
    for row in rows:
        print(
            f"{row['objective']:>4}: fine_error={row['fine_error']:.4f} "
            f"coarse_error={row['coarse_error']:.4f} gap={row['staircase_gap']:.6f}"
        )
    print(f"-> {os.path.join(cfg.output, 'compare.csv')}")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    from .experiment import run_ablation_nc

    cfg = load_config(args.config, _overrides(args))
    rows = run_ablation_nc(cfg, force=args.force, render=not args.no_figures)
    for row in rows:
        print(
            f"n_coarse={row['n_coarse']}: fine_error={row['fine_error']:.4f} "
            f"gap={row['staircase_gap']:.6f}"
        )
    print(f"-> {os.path.join(cfg.output, 'ablation.csv')}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    from .experiment import _load_data, _prepare_out_dir, evaluate
    from .metrics import probability_profile, write_metrics_csv, write_profile_csv
    from .network import load_checkpoint
    from . import plots

    cfg = load_config(args.config, _overrides(args))
    _prepare_out_dir(cfg.output, args.force)
    data = _load_data(cfg)
    net, header = load_checkpoint(args.checkpoint)
    record, batch = evaluate(net, data.test, data.hierarchy, header["epoch"], cfg.train.objective)
    write_metrics_csv([record], os.path.join(cfg.output, "metrics.csv"))
    profile = probability_profile(batch, data.hierarchy)
    write_profile_csv(profile, os.path.join(cfg.output, "profile.csv"))
    if not args.no_figures:
        plots.render_profile(profile, os.path.join(cfg.output, "profile.png"))
    print(
        f"eval epoch {header['epoch']}: fine_error={record.fine_error:.4f} "
        f"coarse_error={record.coarse_error:.4f} -> {cfg.output}"
    )
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    from .experiment import _load_data, _prepare_out_dir
    from .metrics import export_embeddings
    from .network import load_checkpoint

    cfg = load_config(args.config, _overrides(args))
    _prepare_out_dir(cfg.output, args.force)
    data = _load_data(cfg)
    split = data.train if args.split == "train" else data.test
    net, _ = load_checkpoint(args.checkpoint)
    path = os.path.join(cfg.output, "embeddings.csv")
    count = export_embeddings(net, split.inputs, split.fine_labels, data.hierarchy, path)
    print(f"wrote {count} embeddings -> {path}")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "compare": _cmd_compare,
    "ablate-nc": _cmd_ablate,
    "eval": _cmd_eval,
    "export-embeddings": _cmd_export,
}


def main(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, HierarchyError, DataFormatError, NetworkError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:  # includes DataMissingError
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
