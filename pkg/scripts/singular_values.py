"""Mean leading singular values of H_e for each reflection design.

FroMax-1 concentrates energy in the dominant mode; FroMax-2 spreads it over
the first ``N_s`` modes.

    python scripts/singular_values.py --trials 500
"""

import argparse

import numpy as np

from tenrice.experiments import ExperimentConfig, run_se_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--snr", type=float, default=20.0)
    ap.add_argument("--ns", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = ExperimentConfig(snr_db=(args.snr,), trials=args.trials, seed=args.seed,
                           workers=args.workers, pipeline="dt-only-perfect-csi",
                           n_s=args.ns)
    print(f"{'variant':>8} {'alpha_1':>9} {'alpha_2':>9}")
    for rec in run_se_sweep(cfg):
        a1, a2 = np.mean(rec.alpha_values(), axis=0)
        print(f"{rec.variant:>8} {a1:9.2f} {a2:9.2f}")


if __name__ == "__main__":
    main()
