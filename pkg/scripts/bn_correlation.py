"""Track first-layer output statistics of a GHN and a batch-normalized twin on one batch stream."""
import dataclasses

from ghn import layers as Ly
from ghn import tensor as T
from ghn.config import build_spec, load_config
from ghn.train import compare_bn_experiment, write_compare_csv

from _common import datasets, parser, setup


def main():
    p = parser(__doc__)
    p.add_argument("--stats-every", type=int, default=50)
    args = p.parse_args()
    setup(args)
    cfg = load_config("mnist-ghn")
    steps = args.steps or 3000
    tcfg = dataclasses.replace(cfg.train, seed=args.seed, steps=steps,
                               stats_every=args.stats_every, eval_every=max(500, steps // 10))
    T.set_precision(tcfg.precision)
    tr, te = datasets("mnist", args.data_dir)
    spec = build_spec(cfg)
    report = compare_bn_experiment(spec, Ly.with_bias(spec, "batchnorm"), tr, te, tcfg)
    if args.out_dir:
        write_compare_csv(report, args.out_dir)
    print(f"shared batch stream: {report.streams_match}")
    for stat, c in report.correlations.items():
        print(f"pearson[{stat}] = {c:.4f}")


if __name__ == "__main__":
    main()
