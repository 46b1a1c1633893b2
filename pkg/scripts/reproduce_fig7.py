"""BER over a (gamma, T^pt) grid: closed forms next to Monte Carlo, written as CSV."""

import argparse
from pathlib import Path

from powertalk.sim.sweep import load_sweep, run_ber_sweep

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "sweeps" / "ber_grid.yaml"))
    ap.add_argument("--out", default="results/fig7_ber.csv")
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    sweep = load_sweep(args.config)
    if args.trials:
        sweep.trials = args.trials
    text = run_ber_sweep(sweep, workers=args.workers)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(text)
    print(f"{'gamma':>8} {'t_pt':>8} {'ber_standard':>13} {'ber_mc':>10}")
    for row in text.splitlines()[1:]:
        g, t, _, _, bs, mc, *_ = row.split(",")
        print(f"{float(g):8.4f} {float(t):8.4f} {float(bs):13.3e} {float(mc):10.3e}")


if __name__ == "__main__":
    main()
