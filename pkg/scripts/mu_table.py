"""Mean handshake completion time: closed form next to the simulated mean over a (lambda, M) grid."""

import argparse
from pathlib import Path

from powertalk.sim.sweep import load_sweep, run_mu_sweep

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "sweeps" / "mu_grid.yaml"))
    ap.add_argument("--out", default="results/mu_table.csv")
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    sweep = load_sweep(args.config)
    if args.trials:
        sweep.trials = args.trials
    text = run_mu_sweep(sweep, workers=args.workers)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(text)
    print(f"{'lambda':>8} {'M':>3} {'closed form':>12} {'simulated':>10} {'stderr':>8} {'runs':>5}")
    for row in text.splitlines()[1:]:
        lam, m, cf, emp, se, n = row.split(",")
        print(f"{float(lam):8.5f} {int(m):3d} {float(cf):12.4f} {float(emp):10.4f} {float(se):8.4f} {int(n):5d}")


if __name__ == "__main__":
    main()
