"""Spectral efficiency vs SNR for FroMax-1, FroMax-2 and random reflection.

    python scripts/se_vs_snr.py --ns 2 --pipeline end-to-end --out se.csv
"""

import argparse
import logging

from tenrice.experiments import ExperimentConfig, read_csv, run_se_sweep, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--snr", default="-10,-5,0,5,10,15,20")
    ap.add_argument("--ns", type=int, default=2)
    ap.add_argument("--pipeline", default="dt-only-perfect-csi",
                    choices=("dt-only-perfect-csi", "end-to-end"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="se_vs_snr.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)

    cfg = ExperimentConfig(snr_db=tuple(float(s) for s in args.snr.split(",")),
                           trials=args.trials, seed=args.seed, workers=args.workers,
                           pipeline=args.pipeline, n_s=args.ns, out=args.out)
    path = write_csv(run_se_sweep(cfg), cfg.out, cfg)

    rows = read_csv(path)
    variants = list(dict.fromkeys(r["variant"] for r in rows))
    print(f"{'SNR':>5} " + " ".join(f"{v:>16}" for v in variants))
    for snr in dict.fromkeys(r["snr_db"] for r in rows):
        cells = {r["variant"]: r for r in rows if r["snr_db"] == snr}
        print(f"{snr:5.0f} " + " ".join(
            f"{cells[v]['se_mean']:8.2f} +/- {cells[v]['se_sem']:4.2f}" for v in variants))


if __name__ == "__main__":
    main()
