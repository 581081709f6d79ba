"""Normalised exact vs. approximate completion time over an (N, lambda) grid.

    python scripts/completion_time_grid.py --out results/completion_grid.csv
"""
import argparse
import csv
from pathlib import Path

from hopsearch.cli import ctmc_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[20, 30])
    ap.add_argument("--lam", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--alpha", type=float, nargs="+", default=[0.05, 0.15, 0.40])
    ap.add_argument("--hmax", type=int, default=5)
    ap.add_argument("--out", default="results/completion_grid.csv")
    args = ap.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["N", "lambda", "alpha", "h", "T_h", "T_tilde", "normalized", "error"])
        for N in args.N:
            for lam in args.lam:
                rows = ctmc_rows(args.alpha, list(range(1, args.hmax + 1)), N, lam)
                for r in rows:
                    w.writerow([N, lam] + r)
                for a in args.alpha:
                    errs = " ".join(f"{r[5]:+.3f}" for r in rows if r[0] == a)
                    norm = " ".join(f"{r[4]:.3f}" for r in rows if r[0] == a)
                    print(f"N={N:3d} lam={lam:<4} alpha={a:<5} T_h/T_1: {norm} | error: {errs}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
