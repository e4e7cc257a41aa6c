import numpy as np
import pytest

from conftest import rel_err
from tenrice.channel_model import ArrayConfig, PathParams, build_channels, draw_channels
from tenrice.tensor_core import mode_n_unfold
from tenrice.training_sim import (
    Budgets,
    add_noise,
    gen_training,
    matrix_to_tensor,
    measure_matrix_route,
    measure_tensor_route,
)

CFG = ArrayConfig(16, 8, 4, 8)
BUD = Budgets(4, 3, 5, 2)


def test_budgets_shape():
    assert Budgets().tensor_shape == (8, 8, 8, 8)
    assert BUD.k_s == 10
    with pytest.raises(ValueError):
        Budgets(0, 1, 1, 1)


def test_training_moduli():
    tr = gen_training(CFG, BUD, 0)
    np.testing.assert_allclose(np.abs(tr.w), 1 / np.sqrt(8), atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(tr.f, axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(tr.phi), 1 / np.sqrt(CFG.m_s), atol=1e-15)
    assert tr.phi.shape == (CFG.m_s, BUD.k_s)
    assert np.linalg.norm(tr.w) ** 2 == pytest.approx(BUD.k_r)


def test_training_deterministic():
    a, b = gen_training(CFG, BUD, 9), gen_training(CFG, BUD, 9)
    for name in ("w", "f", "phi_h", "phi_v"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_zero_channel_gives_zero_measurement():
    z = np.zeros(2)
    ch = build_channels(CFG, PathParams(z + 0j, z + 0j, z + 0.1, z + 0.2, z + 0.3,
                                        z + 0.4, z + 0.5, z + 0.6))
    tr = gen_training(CFG, BUD, 0)
    assert not np.any(measure_matrix_route(ch, tr))
    assert not np.any(measure_tensor_route(ch, tr))


def test_matrix_route_matches_per_subframe_loop():
    ch = draw_channels(CFG, 2, 2, 1)
    tr = gen_training(CFG, BUD, 2)
    y = measure_matrix_route(ch, tr)
    for s in range(BUD.k_s):
        h_e = ch.h_r @ np.diag(tr.phi[:, s]) @ ch.h_t
        block = tr.w.conj().T @ h_e @ tr.f           # K_R x K_T
        np.testing.assert_allclose(y[:, s], block.reshape(-1, order="F"), atol=1e-12)


@pytest.mark.parametrize("l_t,l_r", [(1, 1), (2, 2), (2, 3)])
def test_dual_route(l_t, l_r):
    ch = draw_channels(CFG, l_t, l_r, 3)
    tr = gen_training(CFG, BUD, 4)
    y_mat = matrix_to_tensor(measure_matrix_route(ch, tr), BUD)
    y_ten = measure_tensor_route(ch, tr)
    assert y_ten.shape == BUD.tensor_shape
    assert rel_err(y_ten, y_mat) < 1e-10


def test_single_path_unfoldings_rank_one():
    ch = draw_channels(CFG, 1, 1, 5)
    y = measure_tensor_route(ch, gen_training(CFG, BUD, 6))
    for n in (1, 2, 3, 4):
        s = np.linalg.svd(mode_n_unfold(y, n), compute_uv=False)
        assert s[1] <= 1e-10 * s[0]


def test_dimension_mismatch_rejected():
    ch = draw_channels(CFG, 1, 1, 5)
    tr = gen_training(ArrayConfig(8, 8, 4, 8), BUD, 6)
    with pytest.raises(ValueError, match="shape"):
        measure_matrix_route(ch, tr)


def _noiseless():
    ch = draw_channels(CFG, 2, 2, 7)
    tr = gen_training(CFG, BUD, 8)
    return measure_tensor_route(ch, tr), tr


def test_infinite_snr_passthrough():
    y, tr = _noiseless()
    meas = add_noise(y, np.inf, 0, tr.w)
    np.testing.assert_array_equal(meas.y, y)
    assert meas.noise_var == 0.0


@pytest.mark.parametrize("bad", [-np.inf, np.nan])
def test_invalid_snr_rejected(bad):
    y, tr = _noiseless()
    with pytest.raises(ValueError):
        add_noise(y, bad, 0, tr.w)


def test_non_finite_tensor_rejected():
    y, tr = _noiseless()
    y = y.copy()
    y[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        add_noise(y, 10.0, 0, tr.w)


def test_noise_calibration_20db():
    y, tr = _noiseless()
    sig = np.linalg.norm(y) ** 2
    noise = np.mean([np.linalg.norm(add_noise(y, 20.0, s, tr.w).y - y) ** 2
                     for s in range(500)])
    snr = 10 * np.log10(sig / noise)
    assert abs(snr - 20.0) < 0.2


def test_noise_covariance_is_filtered():
    # mode-1 fibers of the noise are W^H z, so their covariance is sigma^2 W^H W
    y, tr = _noiseless()
    fibers = []
    for s in range(400):
        meas = add_noise(y, 10.0, s, tr.w)
        fibers.append(mode_n_unfold(meas.y - y, 1))
    z = np.concatenate(fibers, axis=1)
    cov = z @ z.conj().T / z.shape[1]
    expected = meas.noise_var * tr.w.conj().T @ tr.w
    assert rel_err(cov, expected) < 0.05


def test_noise_deterministic():
    y, tr = _noiseless()
    a, b = add_noise(y, 5.0, 123, tr.w), add_noise(y, 5.0, 123, tr.w)
    assert a.y.tobytes() == b.y.tobytes()
    assert a.y_vec.shape == (y.size,)
