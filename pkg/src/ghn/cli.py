"""Command-line entry point: ``ghn {train,eval,compare-bn,surface,selftest}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import algebra
from . import tensor as T
from .config import ConfigError, RunConfig, build_spec, load_config, render_config, resolve_data_dir
from .data import Dataset, load_split
from .layers import Network, with_bias
from .train import (compare_bn_experiment, evaluate, load_checkpoint, restore, save_checkpoint,
                    train, write_compare_csv, write_scalars_csv, write_stats_csv)

log = logging.getLogger("ghn")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="config file or shipped preset name")
    p.add_argument("--data-dir")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--precision", choices=("r32", "r64"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghn", description="Generalized hamming networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("train", help="train a network and write metrics + checkpoint")
    _common(p)
    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p = sub.add_parser("compare-bn", help="GHN vs batch-normalised twin, correlating layer stats")
    _common(p)
    p = sub.add_parser("surface", help="sample an algebra surface to CSV")
    p.add_argument("--op", required=True, choices=algebra.SURFACES)
    p.add_argument("--min", type=float, default=-1.0)
    p.add_argument("--max", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--out-dir", help="write surface_<op>.csv here instead of stdout")
    p = sub.add_parser("selftest", help="run the built-in algebra/gradient/oracle checks")
    p.add_argument("--quick", action="store_true")
    return parser


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    resolve_data_dir(cfg, args.data_dir)
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    overrides = {"seed": args.seed, "learning_rate": args.lr, "batch_size": args.batch_size,
                 "steps": args.steps, "precision": args.precision}
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg.train, k, v)
    cfg.train.__post_init__()
    cfg.validate()
    T.set_precision(cfg.train.precision)
    return cfg


def _datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    tr = load_split(cfg.data.kind, cfg.data.dir, "train")
    te = load_split(cfg.data.kind, cfg.data.dir, "test")
    if cfg.data.train_limit:
        tr = tr.subset(np.arange(min(cfg.data.train_limit, len(tr))))
    if cfg.data.test_limit:
        te = te.subset(np.arange(min(cfg.data.test_limit, len(te))))
    return tr, te


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr, te = _datasets(cfg)
    net = Network(build_spec(cfg), seed=cfg.train.seed)
    (out / "config.cfg").write_text(render_config(cfg), encoding="utf-8")
    res = train(net, tr, te, cfg.train)
    write_scalars_csv(res.scalars, out / "metrics.csv")
    write_stats_csv(res.stats, out / "layer_stats.csv")
    save_checkpoint(res.checkpoint, out / "checkpoint.ghn")
    final = [r.value for r in res.scalars if r.split == "test" and r.metric == "accuracy"]
    print(f"final test accuracy {final[-1]:.4f}" if final else "trained")
    return 0


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, te = _datasets(cfg)
    net = restore(Network(build_spec(cfg), seed=cfg.train.seed), load_checkpoint(args.checkpoint))
    acc, loss = evaluate(net, te, cfg.train.eval_batch_size)
    (out / "eval.csv").write_text(f"metric,value\naccuracy,{acc!r}\nloss,{loss!r}\n")
    print(f"accuracy {acc:.4f} loss {loss:.4f}")
    return 0


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    tr, te = _datasets(cfg)
    spec = build_spec(cfg)
    report = compare_bn_experiment(spec, with_bias(spec, "batchnorm"), tr, te, cfg.train)
    write_compare_csv(report, cfg.out_dir)
    for stat, c in report.correlations.items():
        print(f"pearson[{stat}] = {c:.4f}")
    return 0


def cmd_surface(args) -> int:
    rows = algebra.surface_sample(args.op, (args.min, args.max), (args.min, args.max), args.step)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"surface_{args.op}.csv", "w", newline="") as f:
            algebra.write_surface_csv(rows, f)
    else:
        algebra.write_surface_csv(rows, sys.stdout)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all
    return 0 if run_all(quick=args.quick) else 1


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "compare-bn": cmd_compare,
            "surface": cmd_surface, "selftest": cmd_selftest}


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError, FloatingPointError) as exc:
        print(f"ghn {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
