"""Run the desk-scale campaign at one or more noise levels and print the three report tables."""
import argparse
import time
from pathlib import Path

from ddpredict.montecarlo import CampaignConfig, run_campaign, summarize, write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="reports", help="one subdirectory per noise level is written here")
    ap.add_argument("--sigma2", type=float, nargs="+", default=[0.1, 1.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-systems", type=int, default=200)
    ap.add_argument("--ic-mode", default="stationary_prefix")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    for s2 in args.sigma2:
        cfg = CampaignConfig(n_systems=args.n_systems, sigma2=s2, seed=args.seed,
                             ic_mode=args.ic_mode, workers=args.workers)
        t0 = time.perf_counter()
        report = run_campaign(cfg)
        out = Path(args.out) / f"sigma2_{s2:g}"
        write_report(report, out)
        print(f"== sigma2={s2:g}  ({time.perf_counter() - t0:.1f}s, written to {out})")
        for name, (header, rows) in summarize(report).items():
            print(f"-- {name}")
            print("  ".join(f"{h:>10}" for h in header))
            for row in rows:
                print("  ".join(f"{row[h]:>10.4f}" if isinstance(row[h], float) else f"{row[h]:>10}"
                                for h in header))
        print()


if __name__ == "__main__":
    main()
