"""Fast oracle checks runnable without pytest (``tenrice selftest``)."""

import numpy as np

from .channel_model import (
    ArrayConfig,
    cascaded_channel,
    cascaded_channel_factored,
    draw_channels,
)
from .estimation import lskrf_split, tenrice
from .fromax import VARIANTS, effective_channel, run_algorithm2, se_logdet, waterfill
from .tensor_core import khatri_rao, kronecker, selection_matrices, vec
from .training_sim import (
    Budgets,
    gen_training,
    matrix_to_tensor,
    measure_matrix_route,
    measure_tensor_route,
)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def check_properties(rng):
    a, b, c = _crandn(rng, 3, 4), _crandn(rng, 4, 5), _crandn(rng, 5, 2)
    d = _crandn(rng, 4)
    err1 = _rel(vec(a @ b @ c), kronecker(c.T, a) @ vec(b))
    err5 = _rel(vec(a @ np.diag(d) @ b), khatri_rao(b.T, a) @ d[:, None])
    om_t, om_r = selection_matrices(3, 4)
    err4 = _rel(khatri_rao(om_t, om_r), np.eye(12))
    return max(err1, err5, err4) < 1e-12


def check_dual_route(rng):
    cfg = ArrayConfig(16, 8, 4, 4)
    ch = draw_channels(cfg, 2, 2, rng)
    tr = gen_training(cfg, Budgets(4, 4, 4, 4), rng)
    y_mat = matrix_to_tensor(measure_matrix_route(ch, tr), tr.budgets)
    ok_route = _rel(measure_tensor_route(ch, tr), y_mat) < 1e-10
    ok_hc = _rel(cascaded_channel_factored(ch), cascaded_channel(ch)) < 1e-10
    return ok_route and ok_hc


def check_noiseless_tenrice(rng):
    cfg = ArrayConfig(16, 8, 8, 8)
    ch = draw_channels(cfg, 2, 2, rng)
    tr = gen_training(cfg, Budgets(), rng)
    out = tenrice(measure_tensor_route(ch, tr), tr, cfg, 2, 2, rng_seed=rng)
    h_c = cascaded_channel(ch)
    return _rel(out.channels.h_c_hat, h_c) ** 2 < 1e-6


def check_lskrf(rng):
    cfg = ArrayConfig(8, 4, 2, 3)
    h_t, h_r = _crandn(rng, cfg.m_s, cfg.m_t), _crandn(rng, cfg.m_r, cfg.m_s)
    sep = lskrf_split(khatri_rao(h_t.T, h_r), cfg)
    omega = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.m_s))
    return _rel(effective_channel(sep.h_r_hat, sep.h_t_hat, omega),
                effective_channel(h_r, h_t, omega)) < 1e-10


def check_waterfill_and_se(rng):
    p = waterfill([2.0, 1.0], 2.0, 1.0)
    ok = np.allclose(p, [1.375, 0.625], atol=1e-12)
    ch = draw_channels(ArrayConfig(16, 8, 4, 4), 2, 2, rng)
    for variant in VARIANTS:
        sol = run_algorithm2(ch.h_t, ch.h_r, 1.0, 0.1, 2, variant, rng)
        h_e = effective_channel(ch.h_r, ch.h_t, sol.omega)
        ok &= abs(se_logdet(h_e, sol.q, sol.p, 0.1) - sol.se_bits_per_hz) < 1e-10
        ok &= np.allclose(np.abs(sol.omega), 1 / np.sqrt(len(sol.omega)), atol=1e-12)
    return bool(ok)


CHECKS = {
    "vec / Kronecker / Khatri-Rao identities": check_properties,
    "matrix route == tensor route": check_dual_route,
    "noiseless TenRICE recovers H_c": check_noiseless_tenrice,
    "LSKRF effective-channel invariance": check_lskrf,
    "waterfilling and SE forms agree": check_waterfill_and_se,
}


def run(seed=0, echo=print):
    """Run every check; returns True when all pass."""
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS.items():
        ok = bool(fn(rng))
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}")
    return all_ok
