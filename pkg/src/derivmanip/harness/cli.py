"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
from dataclasses import replace

from .. import data, edf, network
from ..core_math import loss_from_name
from ..errors import ConfigError, InvalidInputError, ParseError
from . import training
from .config import load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _family_from_args(name: str, params: str) -> edf.EdfFamily:
    kv = {}
    for item in (params or "").split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"--params entries must be name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            kv[k.strip().lower()] = float(v)
        except ValueError:
            raise UsageError(f"--params {k}: not a number: {v!r}") from None
    key = name.lower()
    if key in ("cce", "mae", "mse", "gce"):
        return edf.from_loss(loss_from_name(key, kv.get("q")))
    tags = {t.lower(): t for t in edf.FAMILY_PARAMS}
    if key not in tags:
        raise UsageError(f"unknown family {name!r}; choose from nd, ed, bd, unified, cce, mae, mse, gce")
    tag = tags[key]
    missing = [p for p in edf.FAMILY_PARAMS[tag] if p not in kv]
    if missing:
        raise UsageError(f"family {tag} needs --params {','.join(p + '=...' for p in missing)}")
    return edf.EdfFamily(tag, tuple(kv[p] for p in edf.FAMILY_PARAMS[tag]))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="derivmanip", description="Derivative-manipulation training experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one network from a config file")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override output_dir from the config")

    p = sub.add_parser("sweep", help="run every *.cfg in a directory and write sweep.csv")
    p.add_argument("config_dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="sweep CSV path (default: <config_dir>/sweep.csv)")

    p = sub.add_parser("edf-curve", help="export p, raw and normalized weights as CSV")
    p.add_argument("--family", required=True, help="nd, ed, bd, unified, or a loss name")
    p.add_argument("--params", default="", help="comma list, e.g. lambda=0.5,beta=12")
    p.add_argument("--n", type=int, default=101, help="number of sample points")
    p.add_argument("--out", required=True)

    p = sub.add_parser("corrupt", help="inject label noise into a dataset file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--kind", choices=("symmetric", "asymmetric"), required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", default="", help="asymmetric class pairs, e.g. 0-1,2-3")
    p.add_argument("--class-count", type=int)

    p = sub.add_parser("label-correct", help="relabel with a checkpoint's predictions and retrain")
    p.add_argument("config")
    p.add_argument("checkpoint")
    p.add_argument("--output-dir", help="default: <output_dir>/label_corrected")
    return parser


def _summary(result) -> str:
    return (
        f"final_val={result.final_val:.4f} best_val={result.best_val:.4f} "
        f"best_iter={result.best_iteration}"
    )


def _cmd_train(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    print(_summary(training.run_training(cfg)))


def _cmd_sweep(args):
    paths = sorted(glob.glob(os.path.join(args.config_dir, "*.cfg")))
    configs = [load_config(p) for p in paths]
    rows = training.sweep(configs, workers=args.workers)
    out = args.out or os.path.join(args.config_dir, "sweep.csv")
    training.write_sweep_csv(rows, out)
    print(f"{len(rows)} runs written to {out}")


def _cmd_edf_curve(args):
    family = _family_from_args(args.family, args.params)
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    e = training.export_edf_curve(family, args.n, args.out)
    print(f"{family.describe()} Z={e.Z!r} -> {args.out}")


def _cmd_corrupt(args):
    ds = data.load_dataset(args.input, class_count=args.class_count)
    if args.kind == "symmetric":
        out = data.corrupt_symmetric(ds, args.r, args.seed)
    else:
        pairs = []
        for item in args.pairs.split(","):
            if item.strip():
                a, b = item.split("-")
                pairs.append((int(a), int(b)))
        if not pairs:
            raise UsageError("asymmetric corruption needs --pairs")
        out = data.corrupt_asymmetric(ds, pairs, args.r, args.seed)
    data.save_dataset(out, args.output)
    print(f"corrupted {int(out.corrupted_flags.sum())}/{len(out)} labels -> {args.output}")


def _cmd_label_correct(args):
    cfg = load_config(args.config)
    net = network.load_checkpoint(args.checkpoint, cfg.activation, cfg.dropout)
    out = args.output_dir or (os.path.join(cfg.output_dir, "label_corrected") if cfg.output_dir else None)
    cfg = replace(cfg, output_dir=out)
    print(_summary(training.label_correct_and_retrain(cfg, net)))


COMMANDS = {
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "edf-curve": _cmd_edf_curve,
    "corrupt": _cmd_corrupt,
    "label-correct": _cmd_label_correct,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, InvalidInputError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
