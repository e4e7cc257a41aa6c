"""Command line entry point: ``tenrice {ce-sweep,se-sweep,selftest}``."""

import argparse
import dataclasses
import logging
import sys
import time

from . import selftest
from .experiments import (
    PIPELINES,
    ExperimentConfig,
    config_from_mapping,
    read_key_values,
    run_ce_sweep,
    run_se_sweep,
    write_csv,
)


def _add_sweep_args(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--trials", type=int, help="trials per SNR point (default 100)")
    p.add_argument("--snr", help="comma-separated SNR grid in dB (default 0,10,20,30)")
    p.add_argument("--out", help="output CSV path (default results.csv)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key; repeatable")


def build_config(args):
    values = read_key_values(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    flags = {"seed": args.seed, "trials": args.trials, "snr_db": args.snr,
             "out": args.out, "workers": args.workers,
             "pipeline": getattr(args, "pipeline", None),
             "variants": getattr(args, "variants", None),
             "n_s": getattr(args, "ns", None)}
    values.update({k: str(v) for k, v in flags.items() if v is not None})
    return config_from_mapping(values)


def _run_sweep(cfg, fn):
    start = time.perf_counter()
    records = fn(cfg)
    path = write_csv(records, cfg.out, cfg)
    failures = sum(r.failures for r in records)
    logging.info("wrote %d rows to %s (%d failed trials, %.1f s)",
                 len(records), path, failures, time.perf_counter() - start)
    return records


def main(argv=None):
    parser = argparse.ArgumentParser(prog="tenrice", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ce = sub.add_parser("ce-sweep", help="channel-estimation MSE/NMSE vs SNR")
    _add_sweep_args(ce)

    se = sub.add_parser("se-sweep", help="spectral efficiency vs SNR")
    _add_sweep_args(se)
    se.add_argument("--pipeline", choices=PIPELINES[1:],
                    help="CSI source (default dt-only-perfect-csi)")
    se.add_argument("--variants", help="comma-separated subset of fromax1,fromax2,random")
    se.add_argument("--ns", type=int, help="number of data streams (default 2)")

    st = sub.add_parser("selftest", help="run the built-in oracle checks")
    st.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "selftest":
        return 0 if selftest.run(args.seed) else 1
    cfg = build_config(args)
    if args.command == "ce-sweep":
        _run_sweep(cfg, run_ce_sweep)
    else:
        if cfg.pipeline == "ce-only":
            cfg = dataclasses.replace(cfg, pipeline="dt-only-perfect-csi")
        _run_sweep(cfg, run_se_sweep)
    return 0


if __name__ == "__main__":
    sys.exit(main())
