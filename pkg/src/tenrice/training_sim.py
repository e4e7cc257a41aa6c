"""Channel-estimation training: pilots, noiseless measurements and noise.

The measurement tensor has shape ``(K_R, K_T, K_S^h, K_S^v)``. Its Fortran
flattening is ``vec(Y)`` of the stacked measurement matrix
``Y = (F^T kron W^H) H_c (Phi_v kron Phi_h)``, i.e. ``vec(Y) = vec([Y]_(4)^T)``.
"""

from dataclasses import dataclass

import numpy as np

from .channel_model import ArrayConfig, cascaded_channel, steering_matrix
from .tensor_core import cp_build, kronecker, selection_matrices

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Budgets:
    """Training budgets: RX beams, TX beams, and RIS configurations per axis."""

    k_r: int = 8
    k_t: int = 8
    k_s_h: int = 8
    k_s_v: int = 8

    def __post_init__(self):
        for name in ("k_r", "k_t", "k_s_h", "k_s_v"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def k_s(self):
        return self.k_s_h * self.k_s_v

    @property
    def tensor_shape(self):
        return (self.k_r, self.k_t, self.k_s_h, self.k_s_v)


@dataclass(frozen=True)
class TrainingSetup:
    budgets: Budgets
    w: np.ndarray       # M_R x K_R combiner
    f: np.ndarray       # M_T x K_T pilots (symbols absorbed)
    phi_h: np.ndarray   # M_S^h x K_S^h
    phi_v: np.ndarray   # M_S^v x K_S^v

    @property
    def phi(self):
        return kronecker(self.phi_v, self.phi_h)


@dataclass(frozen=True)
class MeasurementTensor:
    y: np.ndarray
    noiseless: np.ndarray
    noise_var: float
    snr_db: float

    @property
    def y_vec(self):
        return self.y.reshape(-1, order="F")


def _unit_phase(rng, rows, cols, modulus):
    return modulus * np.exp(1j * rng.uniform(0.0, TWO_PI, (rows, cols)))


def gen_training(cfg, budgets, rng_seed):
    """Random unit-phase training matrices scaled to their array sizes.

    ``Phi_v`` and ``Phi_h`` get moduli ``1/sqrt(M_S^v)`` and ``1/sqrt(M_S^h)`` so
    that every entry of ``Phi_v kron Phi_h`` has modulus ``1/sqrt(M_S)``.
    """
    rng = np.random.default_rng(rng_seed)
    return TrainingSetup(
        budgets=budgets,
        w=_unit_phase(rng, cfg.m_r, budgets.k_r, 1.0 / np.sqrt(cfg.m_r)),
        f=_unit_phase(rng, cfg.m_t, budgets.k_t, 1.0 / np.sqrt(cfg.m_t)),
        phi_h=_unit_phase(rng, cfg.m_s_h, budgets.k_s_h, 1.0 / np.sqrt(cfg.m_s_h)),
        phi_v=_unit_phase(rng, cfg.m_s_v, budgets.k_s_v, 1.0 / np.sqrt(cfg.m_s_v)),
    )


def _check_dims(cfg: ArrayConfig, tr: TrainingSetup):
    expected = {
        "w": (cfg.m_r, tr.budgets.k_r),
        "f": (cfg.m_t, tr.budgets.k_t),
        "phi_h": (cfg.m_s_h, tr.budgets.k_s_h),
        "phi_v": (cfg.m_s_v, tr.budgets.k_s_v),
    }
    for name, shape in expected.items():
        if getattr(tr, name).shape != shape:
            raise ValueError(
                f"training matrix {name} has shape {getattr(tr, name).shape}, "
                f"expected {shape}"
            )


def measure_matrix_route(ch, tr):
    """Noiseless ``Y = (F^T kron W^H) H_c Phi``, shape ``(K_R K_T, K_S)``."""
    _check_dims(ch.cfg, tr)
    return kronecker(tr.f.T, tr.w.conj().T) @ cascaded_channel(ch) @ tr.phi


def matrix_to_tensor(y_mat, budgets):
    """Reshape the stacked measurement matrix into the 4-way layout."""
    return np.asarray(y_mat).reshape(budgets.tensor_shape, order="F")


def tensor_factors(ch, tr):
    """The four CP factors ``(W^H A_R Om_R, F^T A_T Om_T, Phi_h^T B_h, Phi_v^T B_v G)``."""
    p, cfg = ch.params, ch.cfg
    omega_t, omega_r = selection_matrices(p.l_t, p.l_r)
    b_h = steering_matrix(p.mu_h, cfg.m_s_h)
    b_v = steering_matrix(p.mu_v, cfg.m_s_v)
    return (
        tr.w.conj().T @ ch.a_r @ omega_r,
        tr.f.T @ ch.a_t @ omega_t,
        tr.phi_h.T @ b_h,
        (tr.phi_v.T @ b_v) * p.g,
    )


def measure_tensor_route(ch, tr):
    """Noiseless measurement tensor built as a constrained CP model."""
    _check_dims(ch.cfg, tr)
    return cp_build(*tensor_factors(ch, tr))


def add_noise(noiseless, snr_db, rng_seed, w):
    """Add receiver noise filtered by ``W^H`` at the requested SNR.

    Raw noise ``z ~ CN(0, sigma^2 I)`` is drawn per receive antenna and
    subframe, so the noise tensor's mode-1 fibers are ``W^H z``. ``sigma^2`` is
    set from the realized signal energy and ``E||W^H z||^2 = sigma^2 ||W||_F^2``.
    ``snr_db = inf`` returns the noiseless tensor unchanged.
    """
    noiseless = np.asarray(noiseless)
    if not np.all(np.isfinite(noiseless)):
        raise ValueError("noiseless tensor has non-finite entries")
    if np.isnan(snr_db) or snr_db == -np.inf:
        raise ValueError(f"invalid SNR {snr_db!r} dB")
    if snr_db == np.inf:
        return MeasurementTensor(y=noiseless.copy(), noiseless=noiseless,
                                 noise_var=0.0, snr_db=float(snr_db))
    k_r, k_t, k_s_h, k_s_v = noiseless.shape
    w = np.asarray(w)
    if w.shape[1] != k_r:
        raise ValueError("combiner column count does not match K_R")
    n_sub = k_t * k_s_h * k_s_v
    signal_energy = np.vdot(noiseless, noiseless).real
    noise_var = signal_energy / (10.0 ** (snr_db / 10.0) * n_sub
                                 * np.vdot(w, w).real)
    rng = np.random.default_rng(rng_seed)
    raw = np.sqrt(noise_var / 2.0) * (
        rng.standard_normal((w.shape[0], n_sub))
        + 1j * rng.standard_normal((w.shape[0], n_sub))
    )
    noise = (w.conj().T @ raw).reshape(noiseless.shape, order="F")
    return MeasurementTensor(y=noiseless + noise, noiseless=noiseless,
                             noise_var=float(noise_var), snr_db=float(snr_db))
