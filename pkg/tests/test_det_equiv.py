import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_aging.config import SystemConfig
from mimo_aging.det_equiv import (DETERMINISTIC, de_inputs, de_rate, de_sinr, de_terms, mc_de_ratio,
                                  power_scaling_limit, power_scaling_limit_tau_squared,
                                  power_scaling_sinr)
from mimo_aging.estimation import aging_diagonals, estimation_filters
from mimo_aging.numerics import j0_first_zero
from mimo_aging.scenario import CorrelationSet, unit_correlation

from _oracles import random_psd, scalar_de_sinr


def _stack(mat, K):
    return np.stack([mat] * K)


def test_trace_terms_scalar_example():
    cfg = SystemConfig(M=16, K=4, p_u=0.25, large_scale="unit")
    R, D = _stack(np.eye(16), 4), _stack(np.eye(16) / 2, 4)
    t = de_terms(cfg, R, D, 0)
    np.testing.assert_allclose(t.delta, 0.5)
    np.testing.assert_allclose(t.delta_prime, 0.25)
    np.testing.assert_allclose(t.delta_double_prime, 0.5)
    assert t.lambda_bar == pytest.approx(2.0)
    np.testing.assert_array_equal(t.phase_decay, 1.0)


def test_fully_aged_channel_is_rejected():
    cfg = SystemConfig(M=4, K=2, f_D=j0_first_zero() / (2 * math.pi) / 2.5e-8)
    with pytest.raises(ValueError, match="zero effective channel"):
        de_terms(cfg, _stack(np.eye(4), 2), _stack(np.eye(4) / 2, 2), 1)


def test_perfect_estimation_has_no_own_beam_variance():
    cfg = SystemConfig(M=4, K=2)
    R = np.stack([random_psd(np.random.default_rng(s), 4) for s in range(2)])
    np.testing.assert_allclose(de_terms(cfg, R, R, 0).delta_prime, 0.0, atol=1e-12)


def test_heterogeneous_slo_rejected():
    cfg = SystemConfig(M=3, K=1, lo_topology="SLO", sigma_phi_deg=(1.0, 2.0, 1.0))
    with pytest.raises(ValueError, match="common σ_φ²"):
        de_terms(cfg, np.eye(3)[None], np.eye(3)[None] / 2, 5)
    with pytest.raises(ValueError, match="common σ_φ²"):
        power_scaling_sinr(cfg, 0, 5, 0.5, 1.0, 1.0)
    equal = cfg.replace(sigma_phi_deg=(2.0, 2.0, 2.0))
    de_terms(equal, np.eye(3)[None], np.eye(3)[None] / 2, 5)


def test_sinr_example_and_linear_growth():
    cfg = SystemConfig(M=128, K=8, p_u=1 / 8, p_d=1.0, large_scale="unit")
    R, D = de_inputs(cfg, unit_correlation(cfg))
    t = de_terms(cfg, R, D, 0)
    assert de_sinr(t, cfg, 0) == pytest.approx(32 / 4.25, rel=1e-12)
    assert 32 / 4.25 == pytest.approx(7.529, abs=1e-3)
    half = cfg.replace(M=64)
    R2, D2 = de_inputs(half, unit_correlation(half))
    assert de_sinr(de_terms(half, R2, D2, 0), half, 3) == pytest.approx(16 / 4.25, rel=1e-12)


def test_rate_example():
    cfg = SystemConfig(M=128, K=8, p_u=1 / 8, p_d=1.0, T_c=200, large_scale="unit")
    rep = de_rate(cfg, unit_correlation(cfg))
    assert rep.source == DETERMINISTIC
    np.testing.assert_allclose(rep.rate, (200 - 8) / 200 * math.log2(1 + 32 / 4.25), rtol=1e-12)
    assert rep.sum_se == pytest.approx(8 * rep.rate[0])
    np.testing.assert_allclose(rep.sinr, rep.signal / rep.interference, rtol=1e-15)


def test_zero_denominator():
    cfg = SystemConfig(M=4, K=1, p_u=1.0)
    t = de_terms(cfg, np.eye(4)[None], np.eye(4)[None], 0)
    object.__setattr__(cfg, "sigma_k2", 0.0)
    with pytest.raises(ValueError, match="zero denominator"):
        de_sinr(t, cfg, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 5), st.floats(0.0, 0.004), st.floats(0.0, 3.0))
def test_normalisation_identity(seed, K, fdts, deg):
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(M=6, K=K, T_c=300, f_D=fdts / 2.5e-8, lo_topology="ILO",
                       sigma_phi_deg=deg, sigma_varphi_deg=deg / 2)
    corr = CorrelationSet.from_matrices(np.stack([random_psd(rng, 6, scale=rng.uniform(0.1, 3))
                                                  for _ in range(K)]))
    R, D = de_inputs(cfg, corr)
    t = de_terms(cfg, R, D, int(rng.integers(0, 60)))
    assert t.lambda_bar * np.mean(t.delta) == pytest.approx(1.0, abs=1e-12)
    assert np.all(t.delta > 0)
    assert np.all(t.delta_prime >= -1e-12)


def test_unitary_invariance():
    rng = np.random.default_rng(4)
    cfg = SystemConfig(M=5, K=3, f_D=1e5, lo_topology="ILO", sigma_phi_deg=1.0, sigma_varphi_deg=1.0)
    corr = CorrelationSet.from_matrices(np.stack([random_psd(rng, 5) for _ in range(3)]))
    R, D = de_inputs(cfg, corr)
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5)))
    rot = lambda X: Q @ X @ Q.conj().T
    a = de_terms(cfg, R, D, 30)
    b = de_terms(cfg, np.stack([rot(x) for x in R]), np.stack([rot(x) for x in D]), 30)
    np.testing.assert_allclose(b.delta, a.delta, rtol=1e-10)
    np.testing.assert_allclose(b.delta_prime, a.delta_prime, rtol=1e-10)
    np.testing.assert_allclose(b.delta_double_prime, a.delta_double_prime, rtol=1e-10)


def test_matches_hand_written_scalar_path():
    beta = np.array([0.3, 1.0, 2.5, 0.05])
    cfg = SystemConfig(M=32, K=4, p_u=0.2, p_d=3.0, f_D=8e4, lo_topology="CLO",
                       sigma_phi_deg=1.0, sigma_varphi_deg=(0.5, 1.0, 0.0, 2.0))
    corr = CorrelationSet.from_matrices(beta[:, None, None] * np.eye(32))
    n = 70
    a = aging_diagonals(cfg, [n])[0, :, 0]
    decay = np.exp(-2 * (cfg.user_phase_var + cfg.bs_phase_var[0]) * n)
    ref = scalar_de_sinr(32, beta, cfg.sigma_b2 / cfg.p_p, a, decay, cfg.p_d, cfg.sigma_k2)
    R, D = de_inputs(cfg, corr)
    assert R.ndim == 2  # diagonal representation
    t = de_terms(cfg, R, D, n)
    got = np.array([de_sinr(t, cfg, k) for k in range(4)])
    np.testing.assert_allclose(got, ref, rtol=1e-12)
    # full-matrix representation gives the same numbers
    _, Dfull = estimation_filters(cfg, corr)
    tf = de_terms(cfg, corr.R, Dfull, n)
    np.testing.assert_allclose([de_sinr(tf, cfg, k) for k in range(4)], ref, rtol=1e-12)


def test_empty_data_phase():
    cfg = SystemConfig(M=8, K=2, tau=5, T_c=5, large_scale="unit")
    rep = de_rate(cfg, unit_correlation(cfg))
    assert rep.sum_se == 0.0 and rep.rate.tolist() == [0.0, 0.0]


# power scaling -----------------------------------------------------------------
def test_power_scaling_examples():
    cfg = SystemConfig(M=64, K=4, f_D=1e5, lo_topology="ILO", sigma_phi_deg=1.0)
    big = cfg.replace(M=256)
    half = power_scaling_sinr(cfg, 0, 20, 0.5, 0.25, 0.25)
    assert power_scaling_sinr(big, 0, 20, 0.5, 0.25, 0.25) == pytest.approx(half, rel=1e-12)
    assert half == pytest.approx(power_scaling_limit(cfg, 0, 20, 0.25, 0.25), rel=1e-12)
    r = power_scaling_sinr(big, 0, 20, 0.6, 0.25, 0.25) / power_scaling_sinr(cfg, 0, 20, 0.6, 0.25, 0.25)
    assert r == pytest.approx(4 ** -0.2, rel=1e-12)
    assert 4 ** -0.2 == pytest.approx(0.7579, abs=1e-4)
    with pytest.raises(ValueError):
        power_scaling_sinr(cfg, 0, 20, 0.0, 1.0, 1.0)


def test_power_scaling_limit_at_zero_lag():
    cfg = SystemConfig(M=64, K=4, sigma_b2=2.0, sigma_k2=0.5)
    tau, Eu, Ed = cfg.tau, 0.3, 0.7
    assert power_scaling_limit(cfg, 0, 0, Eu, Ed) == pytest.approx(tau * Ed * Eu / 1.0)
    assert power_scaling_limit_tau_squared(cfg, 0, 0, Eu, Ed) == pytest.approx(tau ** 2 * Ed * Eu / 1.0)
    R = np.diag([2.0, 1.0, 1.0])
    assert power_scaling_limit(cfg, 0, 0, Eu, Ed, m=0, R=R) == pytest.approx(4 * tau * Ed * Eu)
    assert power_scaling_limit(cfg, 0, 0, Eu, Ed, m=0, R=np.diag(R)) == pytest.approx(4 * tau * Ed * Eu)


# diagnostic --------------------------------------------------------------------
def test_ratio_diagnostic():
    cfg = SystemConfig(M=16, K=2, p_u=1.0, T_c=200, large_scale="unit", lo_topology="ILO",
                       sigma_phi_deg=2.0, sigma_varphi_deg=2.0)
    diag = mc_de_ratio(cfg, unit_correlation(cfg), 300, lags=[10, 100])
    de = de_rate(cfg, unit_correlation(cfg))
    idx = np.searchsorted(de.lags, [10, 100])
    np.testing.assert_allclose(diag.ratio, diag.mc.sinr / de.sinr[:, idx], rtol=1e-12)
    s = (cfg.user_phase_var + cfg.bs_phase_var[0])[:, None] * np.array([10, 100])
    np.testing.assert_allclose(diag.excess_exponent, np.log(diag.ratio) / (2 * s), rtol=1e-12)
    still = cfg.replace(sigma_phi_deg=0.0, sigma_varphi_deg=0.0)
    np.testing.assert_array_equal(mc_de_ratio(still, unit_correlation(still), 100,
                                              lags=[10]).excess_exponent, 0.0)
