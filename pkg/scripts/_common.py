"""Shared plumbing for the experiment scripts."""
import argparse
import dataclasses
import logging
import os
import time
from pathlib import Path

from ghn import tensor as T
from ghn.config import build_spec, load_config
from ghn.data import load_split
from ghn.layers import Network
from ghn.train import train, write_scalars_csv, write_stats_csv


def parser(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--data-dir", default=os.environ.get("GHN_DATA_DIR"))
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def setup(args):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    if not args.data_dir:
        raise SystemExit("set --data-dir or GHN_DATA_DIR")


_cache = {}


def datasets(kind, root):
    if (kind, root) not in _cache:
        _cache[kind, root] = load_split(kind, root, "train"), load_split(kind, root, "test")
    return _cache[kind, root]


def run(preset, data_dir, out_dir=None, **train_overrides):
    """Train ``preset`` with overridden train settings; returns {step: test accuracy}."""
    cfg = load_config(preset)
    tcfg = dataclasses.replace(cfg.train, **train_overrides)
    T.set_precision(tcfg.precision)
    tr, te = datasets(cfg.data.kind, data_dir)
    t0 = time.perf_counter()
    res = train(Network(build_spec(cfg), seed=tcfg.seed), tr, te, tcfg)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_scalars_csv(res.scalars, out / "metrics.csv")
        write_stats_csv(res.stats, out / "layer_stats.csv")
    acc = {r.step: r.value for r in res.scalars if r.split == "test" and r.metric == "accuracy"}
    print(f"{preset} {train_overrides}: final accuracy {acc[tcfg.steps]:.4f} "
          f"({time.perf_counter() - t0:.0f}s)")
    return acc


def sub(out_dir, name):
    return None if out_dir is None else Path(out_dir) / name
