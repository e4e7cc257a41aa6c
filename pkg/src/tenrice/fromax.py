"""Data-phase design: SVD beamforming with waterfilling and RIS phase design.

For a fixed reflection vector ``omega`` the effective channel is
``H_e = H_R diag(omega) H_T``; the precoder/combiner pair comes from its SVD
and the power from waterfilling. ``omega`` itself is picked in closed form:

* FroMax-1 maximizes ``||H_e||_F`` over the unit sphere (top right singular
  vector of ``K = H_T^T kr H_R``) and projects onto constant modulus.
* FroMax-2 maximizes the energy on the ``N_s`` diagonal entries of
  ``U_s^H H_e V_s`` instead, with ``U_s`` and ``V_s`` taken from the SVDs of
  ``H_R`` and ``H_T``.
* Random draws uniform phases.
"""

from dataclasses import dataclass

import numpy as np

from .tensor_core import svd

VARIANTS = ("fromax1", "fromax2", "random")


@dataclass(frozen=True)
class BeamformingSolution:
    q: np.ndarray
    p: np.ndarray
    omega: np.ndarray
    power_alloc: np.ndarray
    se_bits_per_hz: float
    alphas: np.ndarray  # leading singular values of H_e


def waterfill(alphas, p_max, sigma2):
    """Capacity-optimal powers ``p_i = max(0, mu - sigma2 / alpha_i^2)``.

    The water level ``mu`` is found exactly by walking the sorted noise-floor
    breakpoints. Modes with ``alpha_i = 0`` get no power.

    Examples
    --------
    >>> waterfill([2.0, 1.0], 2.0, 1.0)
    array([1.375, 0.625])
    """
    alphas = np.asarray(alphas, dtype=float)
    if p_max < 0 or sigma2 <= 0:
        raise ValueError("need p_max >= 0 and sigma2 > 0")
    if np.any(alphas < 0) or not np.any(alphas > 0):
        raise ValueError("waterfilling needs nonnegative gains, at least one positive")
    active = alphas > 0
    floors = np.full(alphas.shape, np.inf)
    floors[active] = sigma2 / alphas[active] ** 2
    order = np.argsort(floors, kind="stable")
    sorted_floors = floors[order]
    n_active = int(active.sum())
    mu = sorted_floors[0] + p_max
    for k in range(n_active, 0, -1):
        mu = (p_max + sorted_floors[:k].sum()) / k
        if mu > sorted_floors[k - 1]:
            break
    powers = np.where(active, np.maximum(0.0, mu - floors), 0.0)
    # remove rounding drift so the budget is met exactly
    if powers.sum() > 0:
        powers *= p_max / powers.sum()
    return powers


def effective_channel(h_r, h_t, omega):
    return (h_r * np.asarray(omega)) @ h_t


def se_logdet(h_e, q, p, sigma2):
    """``log2 det(I + R^{-1} Q^H H_e P P^H H_e^H Q)`` with ``R = sigma2 Q^H Q``."""
    g = q.conj().T @ h_e @ p
    r = sigma2 * (q.conj().T @ q)
    m = np.eye(q.shape[1]) + np.linalg.solve(r, g @ g.conj().T)
    sign, logdet = np.linalg.slogdet(m)
    return float(logdet.real / np.log(2.0))


def se_sum(alphas, powers, sigma2):
    """``sum_i log2(1 + alpha_i^2 p_i / sigma2)``."""
    alphas = np.asarray(alphas)
    return float(np.sum(np.log2(1.0 + alphas ** 2 * np.asarray(powers) / sigma2)))


def beamformers_for_effective(h_e, n_s, p_max, sigma2, omega=None, rank_tol=1e-10):
    """Optimal ``Q``, ``P`` for a given effective channel."""
    dec = svd(h_e)
    if n_s < 1 or n_s > min(h_e.shape):
        raise ValueError(f"n_s={n_s} outside 1..{min(h_e.shape)}")
    eff_rank = int(np.sum(dec.s > rank_tol * max(dec.s[0], np.finfo(float).tiny)))
    if n_s > eff_rank:
        raise ValueError(f"n_s={n_s} exceeds the effective channel rank {eff_rank}")
    alphas = dec.s[:n_s]
    powers = waterfill(alphas, p_max, sigma2)
    q = dec.u[:, :n_s]
    p = dec.v[:, :n_s] * np.sqrt(powers)
    return BeamformingSolution(
        q=q, p=p, omega=omega, power_alloc=powers,
        se_bits_per_hz=se_sum(alphas, powers, sigma2), alphas=alphas,
    )


def beamformers_for_omega(h_r, h_t, omega, n_s, p_max=1.0, sigma2=1.0):
    """SVD beamformers and waterfilled powers for ``H_e = H_R diag(omega) H_T``."""
    return beamformers_for_effective(effective_channel(h_r, h_t, omega), n_s,
                                     p_max, sigma2, omega=np.asarray(omega))


def project_constant_modulus(x):
    """Keep the phases of ``x`` and set every modulus to ``1/sqrt(len(x))``.

    Zero entries get phase 0.
    """
    x = np.ravel(np.asarray(x))
    mag = np.abs(x)
    phase = np.ones_like(x, dtype=complex)
    nz = mag > 0
    phase[nz] = x[nz] / mag[nz]
    return phase / np.sqrt(len(x))


def fromax1(h_r, h_t):
    """Reflection vector maximizing ``||H_R diag(omega) H_T||_F`` before projection."""
    return project_constant_modulus(fromax1_relaxed(h_r, h_t))


def fromax1_relaxed(h_r, h_t):
    """Unit vector maximizing ``||K x||`` with ``K = H_T^T kr H_R``.

    Uses the Gram identity ``K^H K = conj(H_T H_T^H) * (H_R^H H_R)`` (Hadamard
    product) instead of forming ``K``.
    """
    h_r, h_t = np.asarray(h_r), np.asarray(h_t)
    gram = (h_t @ h_t.conj().T).conj() * (h_r.conj().T @ h_r)
    _, vecs = np.linalg.eigh(gram)
    return vecs[:, -1]


def _fix_phase(v):
    # deterministic phase: largest-magnitude entry real positive
    idx = np.argmax(np.abs(v), axis=0)
    ref = v[idx, np.arange(v.shape[1])]
    return v * (ref.conj() / np.abs(ref))


def fromax2_matrix(h_r, h_t, n_s, u_s=None, v_s=None):
    """``D`` with rows ``(V_s[:, i]^T H_T^T) kr (U_s[:, i]^H H_R)``, shape ``(n_s, M_S)``.

    ``U_s`` and ``V_s`` default to the leading singular vectors of ``H_R`` and
    ``H_T`` respectively.
    """
    h_r, h_t = np.asarray(h_r), np.asarray(h_t)
    if u_s is None:
        u_s = svd(h_r).u[:, :n_s]
    if v_s is None:
        v_s = svd(h_t).v[:, :n_s]
    return (h_t @ v_s).T * (u_s.conj().T @ h_r)


def fromax2(h_r, h_t, n_s, refresh=False):
    """Reflection vector maximizing the diagonal energy of ``U_s^H H_e V_s``.

    One pass: build ``D``, sum its ``n_s`` leading right singular vectors, and
    project onto constant modulus. With ``refresh=True`` a second pass
    rebuilds ``U_s``, ``V_s`` from the resulting effective channel.
    """
    n_s = int(n_s)
    if n_s < 1 or n_s > min(*np.shape(h_r), *np.shape(h_t)):
        raise ValueError(f"n_s={n_s} exceeds the channel dimensions")
    d = fromax2_matrix(h_r, h_t, n_s)
    omega = _fromax2_step(d, n_s)
    if refresh:
        dec = svd(effective_channel(h_r, h_t, omega))
        d = fromax2_matrix(h_r, h_t, n_s, dec.u[:, :n_s], dec.v[:, :n_s])
        omega = _fromax2_step(d, n_s)
    return omega


def _fromax2_step(d, n_s):
    row_norms = np.linalg.norm(d, axis=1)
    if np.any(row_norms == 0):
        raise ValueError(f"degenerate D: zero rows {np.flatnonzero(row_norms == 0)}")
    v = _fix_phase(svd(d).v[:, :n_s])
    w = v.sum(axis=1)
    return project_constant_modulus(w / np.linalg.norm(w))


def random_reflection(m_s, rng_seed):
    """Uniform random phases with modulus ``1/sqrt(m_s)``."""
    if m_s < 1:
        raise ValueError("m_s must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, m_s)) / np.sqrt(m_s)


def select_omega(variant, h_r, h_t, n_s, rng_seed=None):
    if variant == "fromax1":
        return fromax1(h_r, h_t)
    if variant == "fromax2":
        return fromax2(h_r, h_t, n_s)
    if variant == "random":
        return random_reflection(np.shape(h_r)[1], rng_seed)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def run_algorithm2(h_t_hat, h_r_hat, p_max, sigma2, n_s, variant, rng_seed=None):
    """Choose ``omega`` by ``variant`` and compute the matching ``Q``, ``P``."""
    omega = select_omega(variant, h_r_hat, h_t_hat, n_s, rng_seed)
    return beamformers_for_omega(h_r_hat, h_t_hat, omega, n_s, p_max, sigma2)
