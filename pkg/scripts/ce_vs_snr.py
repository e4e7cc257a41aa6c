"""Channel-estimation accuracy vs SNR: frequency MSEs and NMSE of H_c.

    python scripts/ce_vs_snr.py --trials 1000 --workers 4 --out ce.csv
"""

import argparse
import logging

from tenrice.experiments import ExperimentConfig, read_csv, run_ce_sweep, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--snr", default="0,5,10,15,20,25,30")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="ce_vs_snr.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)

    cfg = ExperimentConfig(snr_db=tuple(float(s) for s in args.snr.split(",")),
                           trials=args.trials, seed=args.seed, workers=args.workers,
                           out=args.out)
    path = write_csv(run_ce_sweep(cfg), cfg.out, cfg)

    print(f"{'SNR':>5} {'psi_R':>10} {'psi_T':>10} {'mu_h':>10} {'mu_v':>10} "
          f"{'NMSE':>10} fail")
    for r in read_csv(path):
        print(f"{r['snr_db']:5.0f} {r['mse_psi_r']:10.2e} {r['mse_psi_t']:10.2e} "
              f"{r['mse_mu_h']:10.2e} {r['mse_mu_v']:10.2e} {r['nmse_hc']:10.2e} "
              f"{r['failures']:4d}")


if __name__ == "__main__":
    main()
