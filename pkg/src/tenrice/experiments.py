"""Monte-Carlo sweeps over SNR for channel estimation and reflection design.

Trial ``t`` uses the same channel, training matrices, raw noise draw and ALS
starts at every SNR point (common random numbers): only the noise scale
changes along the SNR axis, which keeps the sweep's curves smooth. All
per-trial seeds derive from the master seed by counter, so results do not
depend on the number of worker processes.
"""

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from .channel_model import ArrayConfig, cascaded_channel, draw_channels, wrap_distance
from .estimation import check_identifiability, tenrice
from .fromax import (
    VARIANTS,
    beamformers_for_omega,
    effective_channel,
    run_algorithm2,
    se_logdet,
)
from .training_sim import Budgets, add_noise, gen_training, measure_tensor_route

log = logging.getLogger(__name__)

PIPELINES = ("ce-only", "dt-only-perfect-csi", "end-to-end")

# stream ids for SeedSequence spawn keys
_CHANNEL, _TRAINING, _NOISE, _ALS, _OMEGA = range(5)


@dataclass(frozen=True)
class ExperimentConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    l_t: int = 2
    l_r: int = 2
    budgets: Budgets = field(default_factory=Budgets)
    snr_db: tuple = (0.0, 10.0, 20.0, 30.0)
    trials: int = 100
    seed: int = 0
    pipeline: str = "ce-only"
    variants: tuple = VARIANTS
    n_s: int = 2
    p_max: float = 1.0
    i_max: int = 200
    tol: float = 1e-8
    restarts: int = 3
    max_restarts: int = 10
    workers: int = 1
    out: str = "results.csv"

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_db or any(np.isnan(s) or s == -np.inf for s in self.snr_db):
            raise ValueError(f"invalid SNR grid {self.snr_db!r}")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        if self.pipeline != "dt-only-perfect-csi":
            check_identifiability(self.budgets, self.l_t, self.l_r)
        return self


@dataclass
class TrialResult:
    trial: int
    seed: int
    failed: bool = False
    error: str = ""
    sq_err: dict = field(default_factory=dict)   # frequency name -> matched sq. error
    hc_err: float = math.nan                     # ||H_c - H_c_hat||_F^2
    hc_energy: float = math.nan                  # ||H_c||_F^2
    se: dict = field(default_factory=dict)       # variant -> SE
    alphas: dict = field(default_factory=dict)   # variant -> (alpha_1, alpha_2)

    @property
    def nmse(self):
        return self.hc_err / self.hc_energy


FREQS = ("psi_r", "psi_t", "mu_h", "mu_v")

CSV_COLUMNS = (
    "snr_db", "variant", "trials", "failures",
    "mse_psi_r", "mse_psi_t", "mse_mu_h", "mse_mu_v", "nmse_hc",
    "se_mean", "se_sem", "alpha1_mean", "alpha2_mean", "seed",
)


@dataclass
class MetricRecord:
    snr_db: float
    variant: str
    seed: int
    results: list = field(default_factory=list)

    @property
    def ok(self):
        return [r for r in self.results if not r.failed]

    @property
    def failures(self):
        return sum(r.failed for r in self.results)

    def mse(self, name):
        vals = [r.sq_err[name] for r in self.ok if name in r.sq_err]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def nmse_hc(self):
        ok = [r for r in self.ok if not math.isnan(r.hc_err)]
        if not ok:
            return math.nan
        return float(sum(r.hc_err for r in ok) / sum(r.hc_energy for r in ok))

    def se_values(self):
        return np.array([r.se[self.variant] for r in self.ok if self.variant in r.se])

    def alpha_values(self):
        return np.array([r.alphas[self.variant] for r in self.ok
                         if self.variant in r.alphas])

    def row(self):
        se = self.se_values()
        alphas = self.alpha_values()
        nan = math.nan
        return {
            "snr_db": self.snr_db,
            "variant": self.variant,
            "trials": len(self.results),
            "failures": self.failures,
            "mse_psi_r": self.mse("psi_r"),
            "mse_psi_t": self.mse("psi_t"),
            "mse_mu_h": self.mse("mu_h"),
            "mse_mu_v": self.mse("mu_v"),
            "nmse_hc": self.nmse_hc,
            "se_mean": float(se.mean()) if se.size else nan,
            "se_sem": float(se.std(ddof=1) / np.sqrt(se.size)) if se.size > 1 else nan,
            "alpha1_mean": float(alphas[:, 0].mean()) if alphas.size else nan,
            "alpha2_mean": float(alphas[:, 1].mean()) if alphas.size else nan,
            "seed": self.seed,
        }


def matched_sq_error(truth, est):
    """Sum of squared wrap-around errors after the best one-to-one matching."""
    truth = np.ravel(truth)
    est = np.ravel(est)
    cost = wrap_distance(truth[:, None], est[None, :]) ** 2
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def _seq(cfg, *key):
    return np.random.SeedSequence(cfg.seed, spawn_key=tuple(key))


def trial_seed(cfg, trial):
    """Integer label of a trial's seed stream, recorded in the outputs."""
    return int(_seq(cfg, trial).generate_state(1)[0])


def _draw(cfg, trial):
    ch = draw_channels(cfg.array, cfg.l_t, cfg.l_r, _seq(cfg, trial, _CHANNEL))
    tr = gen_training(cfg.array, cfg.budgets, _seq(cfg, trial, _TRAINING))
    return ch, tr


def _estimate(cfg, ch, tr, snr_idx, trial, res):
    snr = cfg.snr_db[snr_idx]
    meas = add_noise(measure_tensor_route(ch, tr), snr,
                     _seq(cfg, trial, _NOISE), tr.w)
    out = tenrice(meas, tr, cfg.array, cfg.l_t, cfg.l_r, i_max=cfg.i_max,
                  tol=cfg.tol, rng_seed=_seq(cfg, trial, _ALS),
                  restarts=cfg.restarts, max_restarts=cfg.max_restarts)
    p = ch.params
    truth = {"psi_r": p.psi_r, "psi_t": p.psi_t, "mu_h": p.mu_h, "mu_v": p.mu_v}
    for name in FREQS:
        res.sq_err[name] = matched_sq_error(truth[name], getattr(out.params, name))
    h_c = cascaded_channel(ch)
    res.hc_err = float(np.linalg.norm(h_c - out.channels.h_c_hat) ** 2)
    res.hc_energy = float(np.linalg.norm(h_c) ** 2)
    return out


def _design(cfg, ch, h_t_design, h_r_design, snr_idx, trial, res):
    sigma2 = cfg.p_max / 10.0 ** (cfg.snr_db[snr_idx] / 10.0)
    for variant in cfg.variants:
        sol = run_algorithm2(h_t_design, h_r_design, cfg.p_max, sigma2, cfg.n_s,
                             variant, rng_seed=_seq(cfg, trial, _OMEGA))
        h_e = effective_channel(ch.h_r, ch.h_t, sol.omega)
        res.se[variant] = se_logdet(h_e, sol.q, sol.p, sigma2)
        s = np.linalg.svd(h_e, compute_uv=False)
        res.alphas[variant] = (float(s[0]), float(s[1]) if len(s) > 1 else 0.0)


def run_trial(cfg, snr_idx, trial):
    """One Monte-Carlo trial at one SNR point; failures are recorded, not raised."""
    res = TrialResult(trial=trial, seed=trial_seed(cfg, trial))
    try:
        ch, tr = _draw(cfg, trial)
        if cfg.pipeline == "ce-only":
            _estimate(cfg, ch, tr, snr_idx, trial, res)
        elif cfg.pipeline == "dt-only-perfect-csi":
            _design(cfg, ch, ch.h_t, ch.h_r, snr_idx, trial, res)
        else:
            out = _estimate(cfg, ch, tr, snr_idx, trial, res)
            _design(cfg, ch, out.channels.h_t_hat, out.channels.h_r_hat,
                    snr_idx, trial, res)
    except (np.linalg.LinAlgError, RuntimeError, ValueError) as err:
        log.warning("trial %d at %s dB failed: %s", trial, cfg.snr_db[snr_idx], err)
        res.failed = True
        res.error = f"{type(err).__name__}: {err}"
    return res


def _run_trial_args(args):
    return run_trial(*args)


def _run_all(cfg):
    jobs = [(cfg, i, t) for i in range(len(cfg.snr_db)) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_trial_args, jobs, chunksize=4))
    else:
        results = [run_trial(*job) for job in jobs]
    # results come back in job order regardless of worker count
    per_snr = [results[i * cfg.trials:(i + 1) * cfg.trials]
               for i in range(len(cfg.snr_db))]
    return per_snr


def run_ce_sweep(cfg):
    """Channel-estimation metrics per SNR point (one record per SNR)."""
    cfg = dataclasses.replace(cfg, pipeline="ce-only").validate()
    return [MetricRecord(snr_db=float(snr), variant="tenrice", seed=cfg.seed,
                         results=res)
            for snr, res in zip(cfg.snr_db, _run_all(cfg))]


def run_se_sweep(cfg):
    """Spectral efficiency per (SNR, variant) with perfect or estimated CSI."""
    if cfg.pipeline == "ce-only":
        cfg = dataclasses.replace(cfg, pipeline="dt-only-perfect-csi")
    cfg.validate()
    records = []
    for snr, res in zip(cfg.snr_db, _run_all(cfg)):
        for variant in cfg.variants:
            records.append(MetricRecord(snr_db=float(snr), variant=variant,
                                        seed=cfg.seed, results=res))
    return records


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(records, path, cfg=None):
    """Write one row per record plus a ``<path>.manifest`` key=value sidecar."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = rec.row()
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    if cfg is not None:
        write_manifest(cfg, manifest_path(path))
    return path


def read_csv(path):
    """Parse a file written by :func:`write_csv` back into typed rows."""
    ints = {"trials", "failures", "seed"}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = []
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k == "variant":
                    row[k] = v
                elif k in ints:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def manifest_path(path):
    path = Path(path)
    return path.with_name(path.name + ".manifest")


def config_items(cfg):
    """Flatten a config into ``(key, value-string)`` pairs."""
    items = []
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if dataclasses.is_dataclass(val):
            for sub in dataclasses.fields(val):
                items.append((sub.name, str(getattr(val, sub.name))))
        elif isinstance(val, tuple):
            items.append((f.name, ",".join(_fmt(x) for x in val)))
        else:
            items.append((f.name, _fmt(val)))
    return items


def write_manifest(cfg, path):
    lines = [f"software_version={__version__}"]
    lines += [f"{k}={v}" for k, v in config_items(cfg)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_key_values(path):
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed line in {path}: {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_ARRAY_KEYS = {f.name for f in dataclasses.fields(ArrayConfig)}
_BUDGET_KEYS = {f.name for f in dataclasses.fields(Budgets)}


def _parse_floats(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def config_from_mapping(values, base=None):
    """Build an :class:`ExperimentConfig` from string key/value pairs."""
    base = base or ExperimentConfig()
    array = dataclasses.asdict(base.array)
    budgets = dataclasses.asdict(base.budgets)
    top = {}
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    for key, value in values.items():
        if key == "software_version":
            continue
        if key in _ARRAY_KEYS:
            array[key] = int(value)
        elif key in _BUDGET_KEYS:
            budgets[key] = int(value)
        elif key == "snr_db":
            top[key] = _parse_floats(value)
        elif key == "variants":
            top[key] = tuple(v.strip() for v in str(value).split(",") if v.strip())
        elif key in types:
            default = getattr(base, key)
            top[key] = type(default)(value)
        else:
            raise ValueError(f"unknown configuration key {key!r}")
    return dataclasses.replace(base, array=ArrayConfig(**array),
                               budgets=Budgets(**budgets), **top)
