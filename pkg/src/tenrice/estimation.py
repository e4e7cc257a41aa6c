"""TenRICE: CP-ALS channel estimation for the RIS-aided link.

Pipeline: constrained ALS on the measurement tensor -> per-column spatial
frequency recovery by correlation -> least-squares path gains -> cascaded
channel -> per-column rank-1 split (LSKRF) into ``H_T`` and ``H_R``.

The CP factors are ``A_R Om_R``, ``A_T Om_T``, ``B_h``, ``B_v`` where ``Om_R`` and
``Om_T`` repeat columns so that column ``n = l * L_R + k`` of the RIS factors is
coupled to TX path ``l`` and RX path ``k``. Because this coupling is part of
the model being fitted, the ALS output keeps the ``(l, k)`` grouping and no
re-association step is needed before the gain fit.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .channel_model import TWO_PI, steering_matrix
from .tensor_core import (
    khatri_rao,
    kronecker,
    ls_solve,
    mode_n_unfold,
    selection_matrices,
)
from .training_sim import Budgets

log = logging.getLogger(__name__)


class IdentifiabilityError(ValueError):
    """Training budgets too small for the ALS subproblems to be well posed."""


class ALSRankError(RuntimeError):
    """An ALS subproblem lost full column rank."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class FactorEstimates:
    a_r_bar: np.ndarray   # K_R x L_R
    a_t_bar: np.ndarray   # K_T x L_T
    b_h_bar: np.ndarray   # K_S^h x L
    b_v_bar: np.ndarray   # K_S^v x L
    iterations: int
    fit_history: tuple = ()
    converged: bool = False

    @property
    def fit(self):
        return self.fit_history[-1] if self.fit_history else np.inf


@dataclass(frozen=True)
class RecoveredParams:
    psi_r: np.ndarray
    psi_t: np.ndarray
    mu_h: np.ndarray
    mu_v: np.ndarray
    g_hat: np.ndarray = None

    @property
    def l_t(self):
        return len(self.psi_t)

    @property
    def l_r(self):
        return len(self.psi_r)

    def with_gains(self, g_hat):
        return RecoveredParams(self.psi_r, self.psi_t, self.mu_h, self.mu_v,
                               np.asarray(g_hat))


@dataclass(frozen=True)
class SeparatedChannels:
    """Channel estimates; column ``m`` of ``h_r_hat`` and row ``m`` of ``h_t_hat``
    carry an unresolved reciprocal scalar pair."""

    h_t_hat: np.ndarray
    h_r_hat: np.ndarray
    h_c_hat: np.ndarray


@dataclass(frozen=True)
class TenriceResult:
    factors: FactorEstimates
    params: RecoveredParams
    channels: SeparatedChannels


def check_identifiability(budgets, l_t, l_r):
    """Raise :class:`IdentifiabilityError` unless every LS subproblem is overdetermined."""
    b, l = budgets, l_t * l_r
    checks = {
        "K_T*K_S >= L_R": b.k_t * b.k_s >= l_r,
        "K_R*K_S >= L_T": b.k_r * b.k_s >= l_t,
        "K_R*K_T*K_S^v >= L": b.k_r * b.k_t * b.k_s_v >= l,
        "K_R*K_T*K_S^h >= L": b.k_r * b.k_t * b.k_s_h >= l,
    }
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise IdentifiabilityError(
            f"identifiability violated for L_T={l_t}, L_R={l_r}, budgets={b}: "
            + ", ".join(failed)
        )


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _solve_factor(coef, unfolding, n_cols, what, iteration):
    # unfolding ~= X @ coef.T  ->  coef @ X.T ~= unfolding.T
    x, rank = ls_solve(coef, unfolding.T)
    if rank < n_cols:
        raise ALSRankError(f"rank collapse in {what} update: rank {rank} < {n_cols}",
                           iteration)
    return x.T


def _random_init(shape, l_t, l_r, rng):
    _, k_t, k_s_h, k_s_v = shape
    l = l_t * l_r
    return _cn(rng, (k_t, l_t)), _cn(rng, (k_s_h, l)), _cn(rng, (k_s_v, l))


def _gevd_cp3(t, rank, rng):
    """Rank-``rank`` CP of a 3-way tensor by a generalized eigendecomposition.

    Exact for noiseless data when the first two factors have full column
    rank and the third has no two proportional columns.
    """
    i, j, k = t.shape
    x1 = t.reshape(i, j * k, order="F")
    x2 = np.moveaxis(t, 1, 0).reshape(j, i * k, order="F")
    u1 = np.linalg.svd(x1, full_matrices=False)[0][:, :rank]
    u2 = np.linalg.svd(x2, full_matrices=False)[0][:, :rank]
    core = np.einsum("ia,ijk,jb->abk", u1.conj(), t, u2.conj())
    if rng is None:
        # two dominant mode-3 directions of the core
        vh = np.linalg.svd(core.reshape(rank * rank, k), full_matrices=False)[2]
        mix = vh[:2].T
    else:
        mix = rng.standard_normal((k, 2))
    p1, p2 = core @ mix[:, 0], core @ mix[:, 1]
    _, vecs = np.linalg.eig(np.linalg.solve(p2.T, p1.T).T)
    a = u1 @ vecs
    kr = np.linalg.lstsq(a, x1, rcond=None)[0]
    b = np.empty((j, rank), complex)
    c = np.empty((k, rank), complex)
    for n in range(rank):
        u, s, vh = np.linalg.svd(kr[n].reshape(j, k, order="F"))
        b[:, n] = u[:, 0] * s[0]
        c[:, n] = vh[0]
    return a, b, c


def _abs_cos(x):
    x = x / np.linalg.norm(x, axis=0)
    return np.abs(x.conj().T @ x)


def group_columns(a_r_cols, a_t_cols, l_t, l_r):
    """Order ``L`` unlabeled columns into the ``(l, k)`` grid of the CP model.

    Column ``n`` carries a receive vector ``a_r_cols[:, n]`` and a transmit vector
    ``a_t_cols[:, n]``. Returns the permutation ``perm`` such that slot
    ``l * L_R + k`` gets column ``perm[l * L_R + k]``, chosen to maximize the
    collinearity of transmit vectors within each ``l`` and receive vectors
    within each ``k``. Exhaustive search; intended for ``L <= 8``.
    """
    l = l_t * l_r
    sim_t, sim_r = _abs_cos(a_t_cols), _abs_cos(a_r_cols)
    slots = np.arange(l)
    same_t = (slots[:, None] // l_r == slots[None, :] // l_r) & ~np.eye(l, dtype=bool)
    same_r = (slots[:, None] % l_r == slots[None, :] % l_r) & ~np.eye(l, dtype=bool)
    best, best_score = None, -np.inf
    for perm in itertools.permutations(range(l)):
        if perm[0] != 0:
            break  # slot relabeling makes column 0's position arbitrary
        p = np.array(perm)
        score = (sim_t[np.ix_(p, p)][same_t].sum()
                 + sim_r[np.ix_(p, p)][same_r].sum())
        if score > best_score:
            best, best_score = p, score
    return best


def _algebraic_init(y, l_t, l_r, rng):
    """Initial ``(A_T, B_h, B_v)`` from an exact 3-way CP of the merged tensor.

    Merging the RX and TX modes gives a rank-``L`` 3-way CP whose first factor
    is ``A_T Om_T kr A_R Om_R``. The RIS factors come straight out of the
    decomposition; each merged column is split into its RX and TX vectors and
    the columns are then regrouped onto the ``(l, k)`` grid.
    """
    k_r, k_t, k_s_h, k_s_v = y.shape
    l = l_t * l_r
    merged, b_h, b_v = _gevd_cp3(y.reshape(k_r * k_t, k_s_h, k_s_v, order="F"),
                                 l, rng)
    a_r_cols = np.empty((k_r, l), complex)
    a_t_cols = np.empty((k_t, l), complex)
    for n in range(l):
        u, s, vh = np.linalg.svd(merged[:, n].reshape(k_r, k_t, order="F"))
        a_r_cols[:, n] = u[:, 0]
        a_t_cols[:, n] = vh[0] * s[0]
    perm = group_columns(a_r_cols, a_t_cols, l_t, l_r)
    merged, b_h, b_v = merged[:, perm], b_h[:, perm], b_v[:, perm]
    a_t = a_t_cols[:, perm[::l_r]]
    a_r = a_r_cols[:, perm[:l_r]]
    # Per-column scales must factor over (l, k); push the remainder into B_v.
    omega_t, omega_r = selection_matrices(l_t, l_r)
    atoms = khatri_rao(a_t @ omega_t, a_r @ omega_r)
    scale = np.einsum("in,in->n", atoms.conj(), merged) / np.einsum(
        "in,in->n", atoms.conj(), atoms)
    return a_t, b_h, b_v * scale


def _can_init_algebraically(shape, l_t, l_r):
    k_r, k_t, k_s_h, k_s_v = shape
    l = l_t * l_r
    return 1 < l <= 8 and k_r * k_t >= l and k_s_h >= l and k_s_v >= 2


def _model_fit(unf4, a_r, a_t, b_h, b_v, omega_t, omega_r):
    coef_v = khatri_rao(b_h, a_t @ omega_t, a_r @ omega_r)
    return np.linalg.norm(unf4 - b_v @ coef_v.T)


def _als_single(unf, shape, l_t, l_r, i_max, tol, init, line_search=True):
    omega_t, omega_r = selection_matrices(l_t, l_r)
    l = l_t * l_r
    a_t, b_h, b_v = init
    y_norm = np.linalg.norm(unf[3])
    history = []
    prev = None
    it = 0
    converged = False
    for it in range(1, i_max + 1):
        a_t_rep = a_t @ omega_t
        a_r = _solve_factor(khatri_rao(b_v, b_h, a_t_rep) @ omega_r.T, unf[0],
                            l_r, "A_R", it)
        a_r_rep = a_r @ omega_r
        a_t = _solve_factor(khatri_rao(b_v, b_h, a_r_rep) @ omega_t.T, unf[1],
                            l_t, "A_T", it)
        a_t_rep = a_t @ omega_t
        b_h = _solve_factor(khatri_rao(b_v, a_t_rep, a_r_rep), unf[2], l, "B_h", it)
        coef_v = khatri_rao(b_h, a_t_rep, a_r_rep)
        b_v = _solve_factor(coef_v, unf[3], l, "B_v", it)
        fit = np.linalg.norm(unf[3] - b_v @ coef_v.T)
        cur = (a_r, a_t, b_h, b_v)
        if line_search and prev is not None and it > 2:
            # extrapolate along the last sweep's update; keep only if it helps
            step = it ** (1.0 / 3.0)
            trial = tuple(p + step * (c - p) for p, c in zip(prev, cur))
            trial_fit = _model_fit(unf[3], *trial, omega_t, omega_r)
            if trial_fit < fit:
                cur, fit = trial, trial_fit
                a_r, a_t, b_h, b_v = cur
        prev = cur
        history.append(float(fit))
        if fit <= 1e-13 * y_norm or (
                len(history) > 1 and history[-2] - fit <= tol * history[-2]):
            converged = True
            break
    return FactorEstimates(a_r_bar=a_r, a_t_bar=a_t, b_h_bar=b_h, b_v_bar=b_v,
                           iterations=it, fit_history=tuple(history),
                           converged=converged)


def als_run(y, l_t, l_r, i_max=200, tol=1e-8, rng_seed=None, restarts=3,
            budgets=None, max_restarts=10):
    """Fit the constrained rank-``L_T L_R`` CP model to the measurement tensor.

    Each sweep updates ``A_R``, ``A_T``, ``B_h`` and ``B_v`` in that order, each
    from the freshest other factors. A run stops when the residual norm drops
    by less than ``tol`` relative to the previous sweep, or after ``i_max``
    sweeps. The first start is algebraic (an exact 3-way decomposition of the
    merged tensor) when the budgets allow it; the others are random. The best
    of ``restarts`` starts is returned, stopping early on an exact fit. If
    none of them met the tolerance within ``i_max`` sweeps (an ALS swamp),
    extra random starts are drawn until one does, up to ``max_restarts``.
    Restarts that fail with :class:`ALSRankError` are skipped; if all fail the
    last error is raised.
    """
    y = np.asarray(y)
    check_identifiability(budgets or Budgets(*y.shape), l_t, l_r)
    rng = np.random.default_rng(rng_seed)
    unf = [mode_n_unfold(y, n) for n in (1, 2, 3, 4)]
    y_norm = np.linalg.norm(unf[3])
    best, last_err = None, None
    for r in range(max(restarts, max_restarts)):
        if r >= restarts and best is not None and best.converged:
            break
        try:
            if r < restarts and _can_init_algebraically(y.shape, l_t, l_r):
                init = _algebraic_init(y, l_t, l_r, None if r == 0 else rng)
            else:
                init = _random_init(y.shape, l_t, l_r, rng)
            est = _als_single(unf, y.shape, l_t, l_r, i_max, tol, init)
        except (ALSRankError, np.linalg.LinAlgError) as err:
            log.debug("ALS restart %d failed: %s", r, err)
            last_err = err
            continue
        if best is None or est.fit < best.fit:
            best = est
        if best.fit <= 1e-12 * y_norm:
            break
    if best is None:
        raise last_err
    return best


def _correlation(col, projector, m, nus):
    """Normalized correlation of ``col`` with ``projector @ v_1D(nu)`` for each nu."""
    atoms = projector @ steering_matrix(nus, m)
    num = np.abs(col.conj() @ atoms)
    den = np.linalg.norm(atoms, axis=0) * np.linalg.norm(col)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def recover_frequency(col, projector, m=None, grid0=1024, refine_levels=5,
                      lo=0.0, hi=TWO_PI, n_candidates=3):
    """Spatial frequency maximizing the normalized correlation with ``col``.

    The search evaluates ``grid0`` points on ``[lo, hi)``, then zooms around
    the best ``n_candidates`` local maxima: each of ``refine_levels`` stages
    spans one cell on either side of the incumbent with a step ten times
    finer. A parabolic fit through the final three points polishes the peak.
    A full ``2 pi`` range is treated as periodic.
    """
    col = np.ravel(np.asarray(col))
    if not np.any(col):
        raise ValueError("cannot recover a frequency from a zero column")
    projector = np.asarray(projector)
    if m is None:
        m = projector.shape[1]
    periodic = np.isclose(hi - lo, TWO_PI)
    step = (hi - lo) / grid0
    grid = lo + step * np.arange(grid0 if periodic else grid0 + 1)
    corr = _correlation(col, projector, m, grid)
    if periodic:
        is_peak = (corr >= np.roll(corr, 1)) & (corr >= np.roll(corr, -1))
    else:
        padded = np.concatenate(([-np.inf], corr, [-np.inf]))
        is_peak = (corr >= padded[:-2]) & (corr >= padded[2:])
    peaks = np.flatnonzero(is_peak)
    peaks = peaks[np.argsort(corr[peaks])[::-1][:n_candidates]]

    best_nu, best_val = grid[np.argmax(corr)], corr.max()
    offsets = np.arange(-10, 11)
    for p in peaks:
        nu, h = grid[p], step
        for _ in range(refine_levels):
            h /= 10.0
            cand = nu + h * offsets
            if not periodic:
                cand = np.clip(cand, lo, hi)
            c = _correlation(col, projector, m, cand)
            nu = cand[np.argmax(c)]
        # parabolic polish on the last stage
        trio = nu + h * np.array([-1.0, 0.0, 1.0])
        c0, c1, c2 = _correlation(col, projector, m, trio)
        denom = c0 - 2.0 * c1 + c2
        if denom < 0:
            shift = 0.5 * (c0 - c2) / denom
            if abs(shift) <= 1.0:
                nu_p = nu + shift * h
                if periodic or lo <= nu_p <= hi:
                    nu = nu_p if _correlation(col, projector, m, [nu_p])[0] >= c1 else nu
        val = _correlation(col, projector, m, [nu])[0]
        if val > best_val:
            best_nu, best_val = nu, val
    if periodic:
        best_nu = lo + np.mod(best_nu - lo, TWO_PI)
    return float(best_nu)


def recover_all_params(est, tr, cfg, **search):
    """Recover ``psi_R``, ``psi_T``, ``mu^h``, ``mu^v`` column by column.

    All four are searched on ``[0, 2 pi)``: the combined RIS frequencies are
    sums of two angles and only matter modulo ``2 pi``.
    """
    def run(factor, projector, m):
        return np.array([recover_frequency(factor[:, i], projector, m, **search)
                         for i in range(factor.shape[1])])

    return RecoveredParams(
        psi_r=run(est.a_r_bar, tr.w.conj().T, cfg.m_r),
        psi_t=run(est.a_t_bar, tr.f.T, cfg.m_t),
        mu_h=run(est.b_h_bar, tr.phi_h.T, cfg.m_s_h),
        mu_v=run(est.b_v_bar, tr.phi_v.T, cfg.m_s_v),
    )


def gain_dictionary(params, tr, cfg):
    """``Phi_v^T B_v kr Phi_h^T B_h kr F^T A_T Om_T kr W^H A_R Om_R``."""
    omega_t, omega_r = selection_matrices(params.l_t, params.l_r)
    return khatri_rao(
        tr.phi_v.T @ steering_matrix(params.mu_v, cfg.m_s_v),
        tr.phi_h.T @ steering_matrix(params.mu_h, cfg.m_s_h),
        tr.f.T @ steering_matrix(params.psi_t, cfg.m_t) @ omega_t,
        tr.w.conj().T @ steering_matrix(params.psi_r, cfg.m_r) @ omega_r,
    )


def estimate_gains(y_vec, params, tr, cfg):
    """Least-squares combined path gains from the vectorized measurement."""
    dic = gain_dictionary(params, tr, cfg)
    g, rank = ls_solve(dic, np.ravel(y_vec))
    if rank < dic.shape[1]:
        raise np.linalg.LinAlgError(
            f"gain dictionary is rank deficient ({rank} < {dic.shape[1]})"
        )
    return g


def reconstruct_cascaded(params, cfg):
    """``H_c = (A_T kron A_R) diag(g) (B_v kr B_h)^T`` from recovered parameters.

    The TX factor goes first in the Kronecker product to match the row
    ordering of ``H_T^T kr H_R``.
    """
    a_t = steering_matrix(params.psi_t, cfg.m_t)
    a_r = steering_matrix(params.psi_r, cfg.m_r)
    b = khatri_rao(steering_matrix(params.mu_v, cfg.m_s_v),
                   steering_matrix(params.mu_h, cfg.m_s_h))
    return (kronecker(a_t, a_r) * params.g_hat) @ b.T


def lskrf_split(h_c_hat, cfg):
    """Split ``H_c ~= H_T^T kr H_R`` by a rank-1 SVD of every reshaped column."""
    h_c_hat = np.asarray(h_c_hat)
    if h_c_hat.shape != (cfg.m_t * cfg.m_r, cfg.m_s):
        raise ValueError(f"H_c has shape {h_c_hat.shape}, expected "
                         f"{(cfg.m_t * cfg.m_r, cfg.m_s)}")
    # column m -> M_R x M_T block X[r, t] = H_R[r, m] H_T[m, t]
    blocks = h_c_hat.T.reshape(cfg.m_s, cfg.m_t, cfg.m_r).transpose(0, 2, 1)
    u, s, vh = np.linalg.svd(blocks, full_matrices=False)
    root = np.sqrt(s[:, 0])
    h_r_hat = (u[:, :, 0] * root[:, None]).T
    h_t_hat = vh[:, 0, :] * root[:, None]
    return SeparatedChannels(h_t_hat=h_t_hat, h_r_hat=h_r_hat, h_c_hat=h_c_hat)


def tenrice(meas, tr, cfg, l_t, l_r, i_max=200, tol=1e-8, rng_seed=None,
            restarts=3, max_restarts=10, **search):
    """Full estimation chain from a measurement tensor to ``H_T``, ``H_R`` estimates."""
    y = getattr(meas, "y", meas)
    est = als_run(y, l_t, l_r, i_max=i_max, tol=tol, rng_seed=rng_seed,
                  restarts=restarts, budgets=tr.budgets, max_restarts=max_restarts)
    params = recover_all_params(est, tr, cfg, **search)
    g_hat = estimate_gains(np.asarray(y).reshape(-1, order="F"), params, tr, cfg)
    params = params.with_gains(g_hat)
    channels = lskrf_split(reconstruct_cascaded(params, cfg), cfg)
    return TenriceResult(factors=est, params=params, channels=channels)
