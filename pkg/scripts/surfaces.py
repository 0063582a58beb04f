"""Write every algebra surface (GHD, its fuzziness, membership grade and slope) as CSV grids."""
import argparse
from pathlib import Path

from ghn import algebra as A

def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default="runs/surfaces")
    p.add_argument("--min", type=float, default=-1.0)
    p.add_argument("--max", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.01)
    args = p.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for op in A.SURFACES:
        rows = A.surface_sample(op, (args.min, args.max), (args.min, args.max), args.step)
        with open(out / f"surface_{op}.csv", "w", newline="") as f:
            A.write_surface_csv(rows, f)
        print(f"{op}: {len(rows)} points, values in [{rows[:, 2].min():.3f}, {rows[:, 2].max():.3f}]")


if __name__ == "__main__":
    main()
