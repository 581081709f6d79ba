"""Query spread ratio against the hop limit for each stop scheme.

    python scripts/stop_scheme_spread.py --hops 1 2 3 5 8 --out results/spread.csv
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from hopsearch.simulator import SimConfig, prepare, run
from hopsearch.trace import SyntheticConfig, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=100)
    ap.add_argument("--side", type=float, default=1000.0)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--T", type=float, default=1800.0)
    ap.add_argument("--hops", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6, 8])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/spread.csv")
    args = ap.parse_args()

    duration = args.queries * 15.0 + 2 * args.T + 600.0
    trace = generate(SyntheticConfig("random_waypoint", args.nodes, duration, area=(args.side, args.side),
                                     radio_range=20.0, seed=args.seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["stop", "h", "p_s", "mean_spread_ratio"])
        for stop in ("ORACLE", "EXCH", "LOCAL"):
            for h in args.hops:
                cfg = SimConfig(scheme="HOP", h=h, stop=stop, t_forward=args.T, record_log=False, seed=args.seed)
                own, work = prepare(trace, cfg)
                res = run(trace, cfg, work, own)
                ps = np.mean([q.delivered for q in res.queries])
                spread = np.mean([q.spread_count for q in res.queries]) / trace.n_nodes
                w.writerow([stop, h, repr(float(ps)), repr(float(spread))])
                print(f"{stop:6s} h={h}  P_s={ps:.3f}  spread={spread:.3f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
