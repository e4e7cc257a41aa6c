"""Geometric mmWave channels for a TX-ULA -> RIS-URA -> RX-ULA link.

``H_T`` (RIS x TX) and ``H_R`` (RX x RIS) are sums of a few plane waves::

    H_T = B_T G_T A_T^T,    H_R = A_R G_R B_R^T

with ``A_X`` holding 1-D steering vectors, ``B_X = B_X^v kr B_X^h`` holding the
2-D RIS steering vectors and ``G_X = diag(g_X) / sqrt(L_X)``.
"""

from dataclasses import dataclass

import numpy as np

from .tensor_core import khatri_rao, kronecker

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ArrayConfig:
    """Antenna counts: TX/RX ULAs and an ``m_s_v`` x ``m_s_h`` RIS."""

    m_t: int = 64
    m_r: int = 16
    m_s_v: int = 16
    m_s_h: int = 16

    def __post_init__(self):
        for name in ("m_t", "m_r", "m_s_v", "m_s_h"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def m_s(self):
        return self.m_s_v * self.m_s_h


@dataclass(frozen=True)
class PathParams:
    """Per-side path gains and spatial frequencies (radians)."""

    g_t: np.ndarray
    g_r: np.ndarray
    psi_t: np.ndarray
    psi_r: np.ndarray
    mu_v_t: np.ndarray
    mu_h_t: np.ndarray
    mu_v_r: np.ndarray
    mu_h_r: np.ndarray

    @property
    def l_t(self):
        return len(self.g_t)

    @property
    def l_r(self):
        return len(self.g_r)

    @property
    def l(self):
        return self.l_t * self.l_r

    @property
    def mu_v(self):
        """Combined vertical RIS frequencies, index ``n = l * L_R + k``."""
        return (self.mu_v_t[:, None] + self.mu_v_r[None, :]).ravel()

    @property
    def mu_h(self):
        """Combined horizontal RIS frequencies, index ``n = l * L_R + k``."""
        return (self.mu_h_t[:, None] + self.mu_h_r[None, :]).ravel()

    @property
    def g(self):
        """Combined gains ``undiag(G_T kron G_R)``."""
        return np.kron(self.g_t, self.g_r) / np.sqrt(self.l)


@dataclass(frozen=True)
class ChannelRealization:
    cfg: ArrayConfig
    params: PathParams
    h_t: np.ndarray
    h_r: np.ndarray
    a_t: np.ndarray
    a_r: np.ndarray
    b_t: np.ndarray
    b_r: np.ndarray
    g_t_mat: np.ndarray
    g_r_mat: np.ndarray

    @property
    def h_c(self):
        return cascaded_channel(self)


def steering_1d(nu, m):
    """ULA response ``[1, e^{j nu}, ..., e^{j (m-1) nu}]^T`` as an ``(m, 1)`` array."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.exp(1j * np.arange(m)[:, None] * nu)


def steering_matrix(nus, m):
    """Stack 1-D steering vectors for every frequency in ``nus`` as columns."""
    nus = np.atleast_1d(np.asarray(nus, dtype=float))
    return np.exp(1j * np.outer(np.arange(m), nus))


def steering_2d(nu_v, nu_h, m_v, m_h):
    """URA response ``v_1D(nu_v) kr v_1D(nu_h)``; the horizontal index runs fastest."""
    return khatri_rao(steering_1d(nu_v, m_v), steering_1d(nu_h, m_h))


def wrap_distance(a, b):
    """Elementwise distance between angles on the circle, in ``[0, pi]``."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def _min_separation(x):
    x = np.ravel(x)
    if len(x) < 2:
        return np.inf
    d = wrap_distance(x[:, None], x[None, :])
    return d[np.triu_indices(len(x), 1)].min()


def _cn(rng, size):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def draw_params(cfg, l_t, l_r, rng, max_tries=1000):
    """Draw path parameters with a minimum pairwise frequency separation.

    Every frequency vector (per side and the combined RIS frequencies) keeps
    its entries at least ``2 pi / (4 max(M))`` apart, enforced by rejection.
    """
    if l_t < 1 or l_r < 1:
        raise ValueError("path counts must be >= 1")
    sep = TWO_PI / (4 * max(cfg.m_t, cfg.m_r, cfg.m_s_v, cfg.m_s_h))
    g_t = _cn(rng, l_t)
    g_r = _cn(rng, l_r)
    for _ in range(max_tries):
        p = PathParams(
            g_t=g_t,
            g_r=g_r,
            psi_t=rng.uniform(0.0, TWO_PI, l_t),
            psi_r=rng.uniform(0.0, TWO_PI, l_r),
            mu_v_t=rng.uniform(0.0, np.pi, l_t),
            mu_h_t=rng.uniform(0.0, TWO_PI, l_t),
            mu_v_r=rng.uniform(0.0, np.pi, l_r),
            mu_h_r=rng.uniform(0.0, TWO_PI, l_r),
        )
        vectors = (p.psi_t, p.psi_r, p.mu_v_t, p.mu_h_t, p.mu_v_r, p.mu_h_r,
                   p.mu_v, p.mu_h)
        if all(_min_separation(v) >= sep for v in vectors):
            return p
    raise RuntimeError(f"could not draw separated frequencies in {max_tries} tries")


def build_channels(cfg, params):
    """Dense ``H_T``, ``H_R`` and their factors from path parameters."""
    a_t = steering_matrix(params.psi_t, cfg.m_t)
    a_r = steering_matrix(params.psi_r, cfg.m_r)
    b_t = khatri_rao(steering_matrix(params.mu_v_t, cfg.m_s_v),
                     steering_matrix(params.mu_h_t, cfg.m_s_h))
    b_r = khatri_rao(steering_matrix(params.mu_v_r, cfg.m_s_v),
                     steering_matrix(params.mu_h_r, cfg.m_s_h))
    g_t_mat = np.diag(params.g_t) / np.sqrt(params.l_t)
    g_r_mat = np.diag(params.g_r) / np.sqrt(params.l_r)
    return ChannelRealization(
        cfg=cfg,
        params=params,
        h_t=b_t @ g_t_mat @ a_t.T,
        h_r=a_r @ g_r_mat @ b_r.T,
        a_t=a_t,
        a_r=a_r,
        b_t=b_t,
        b_r=b_r,
        g_t_mat=g_t_mat,
        g_r_mat=g_r_mat,
    )


def draw_channels(cfg, l_t, l_r, rng_seed):
    """Random channel realization; bit-identical for a fixed seed.

    ``rng_seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    rng = np.random.default_rng(rng_seed)
    return build_channels(cfg, draw_params(cfg, l_t, l_r, rng))


def cascaded_channel(ch):
    """``H_c = H_T^T kr H_R``, shape ``(M_T M_R, M_S)``."""
    return khatri_rao(ch.h_t.T, ch.h_r)


def cascaded_channel_factored(ch):
    """``H_c`` via ``(A_T kron A_R) G (B_v kr B_h)^T`` on the combined frequencies."""
    cfg, p = ch.cfg, ch.params
    b_v = steering_matrix(p.mu_v, cfg.m_s_v)
    b_h = steering_matrix(p.mu_h, cfg.m_s_h)
    return (kronecker(ch.a_t, ch.a_r) * p.g) @ khatri_rao(b_v, b_h).T
