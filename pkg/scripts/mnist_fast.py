"""Four-layer GHN on MNIST: test accuracy after 1000 mini-batches at lr 0.1."""
from _common import parser, run, setup


def main():
    p = parser(__doc__)
    p.add_argument("--lr", type=float, default=0.1)
    args = p.parse_args()
    setup(args)
    acc = run("mnist-ghn", args.data_dir, args.out_dir, seed=args.seed,
              steps=args.steps or 1000, learning_rate=args.lr)
    for step, a in sorted(acc.items()):
        print(f"step {step:5d}  test accuracy {a:.4f}")


if __name__ == "__main__":
    main()
