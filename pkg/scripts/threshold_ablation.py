"""MNIST or CIFAR-10 with trainable double thresholds against r = 0."""
from _common import parser, run, setup, sub


def main():
    p = parser(__doc__)
    p.add_argument("--dataset", choices=("mnist", "cifar10"), default="mnist")
    args = p.parse_args()
    setup(args)
    steps = args.steps or (2000 if args.dataset == "mnist" else 3000)
    base = f"{args.dataset}-ghn"
    with_r = run(base, args.data_dir, sub(args.out_dir, "threshold"), seed=args.seed, steps=steps)
    without = run(base + "-no-threshold", args.data_dir, sub(args.out_dir, "no-threshold"),
                  seed=args.seed, steps=steps)
    print("step  threshold  r=0")
    for step in sorted(with_r):
        print(f"{step:5d}  {with_r[step]:9.4f}  {without[step]:.4f}")
    print(f"final gap {with_r[steps] - without[steps]:+.4f}")


if __name__ == "__main__":
    main()
