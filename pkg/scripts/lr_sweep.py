"""Learning-rate sweep on MNIST; prints the accuracy curve of each rate side by side."""
from _common import parser, run, setup, sub


def main():
    p = parser(__doc__)
    p.add_argument("--rates", type=float, nargs="+", default=[0.01, 0.03, 0.1])
    args = p.parse_args()
    setup(args)
    curves = {lr: run("mnist-ghn", args.data_dir, sub(args.out_dir, f"lr{lr:g}"), seed=args.seed,
                      steps=args.steps or 2000, learning_rate=lr)
              for lr in args.rates}
    print("step  " + "  ".join(f"lr={lr:<7g}" for lr in args.rates))
    for step in sorted(curves[args.rates[0]]):
        print(f"{step:5d} " + "  ".join(f"{curves[lr][step]:10.4f}" for lr in args.rates))


if __name__ == "__main__":
    main()
