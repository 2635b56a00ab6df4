import math

import numpy as np
import pytest

from mimo_aging.config import SystemConfig
from mimo_aging.det_equiv import de_rate
from mimo_aging.downlink import (MONTE_CARLO, SinrReport, _breakdown, hardening_sinr_mc,
                                 mc_eval_lags, mrt_precoder, random_symbols, rate_from_sinr,
                                 sample_gains, sum_spectral_efficiency)
from mimo_aging.estimation import aging_diagonals
from mimo_aging.numerics import RngStream, bessel_j0
from mimo_aging.scenario import unit_correlation

from _oracles import scalar_mc_sinr


def _unit(**kw):
    base = dict(large_scale="unit", p_d=1.0, sigma_k2=1.0, sigma_b2=1.0)
    base.update(kw)
    cfg = SystemConfig(**base)
    return cfg, unit_correlation(cfg)


# precoder --------------------------------------------------------------------
def test_precoder_single_unit_vector():
    e1 = np.zeros((1, 4), dtype=complex)
    e1[0, 0] = 1.0
    pre = mrt_precoder(e1, np.ones((1, 4)))
    np.testing.assert_array_equal(pre.F[:, 0], e1[0])
    assert np.real(np.trace(pre.F @ pre.F.conj().T)) == 1.0
    assert pre.lam_physical == pytest.approx(1.0)


def test_precoder_normalisation_is_homogeneous():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((50, 3, 8)) + 1j * rng.standard_normal((50, 3, 8))
    a = rng.uniform(0.2, 1.0, (3, 8))
    lam = mrt_precoder(g, a).lam
    assert mrt_precoder(3.0 * g, a).lam == pytest.approx(lam / 9.0)


def test_sample_normalisation_converges_to_closed_form():
    cfg, corr = _unit(M=64, K=8, p_u=1 / 8)  # sigma_b2 / p_p = 1 so D = I/2
    rep = hardening_sinr_mc(cfg, corr, 10000, lags=[cfg.tau + 1], threads=4)
    assert rep.lam[0] == pytest.approx(2.0, rel=0.02)


def test_power_constraint():
    cfg, corr = _unit(M=16, K=4, p_u=1.0, p_d=10.0, f_D=1e5, lo_topology="ILO",
                      sigma_phi_deg=2.0, T_c=50)
    lag = 30
    lam = mrt_precoder(sample_gains(cfg, corr, 20000, lag, RngStream(0))["g_hat"],
                       aging_diagonals(cfg, [lag])[0]).lam
    fresh = sample_gains(cfg, corr, 20000, lag, RngStream(1))
    pre = mrt_precoder(fresh["g_hat"], fresh["aging"], lam=lam)
    s = pre.transmit(random_symbols(RngStream(2), (20000, cfg.K)))
    power = np.mean(cfg.p_d * np.sum(np.abs(s) ** 2, axis=-1) / cfg.K)
    assert power == pytest.approx(cfg.p_d, rel=0.02)


# SINR terms --------------------------------------------------------------------
def test_decomposition_is_complete():
    cfg, corr = _unit(M=16, K=3, p_u=1.0, f_D=1e5, lo_topology="CLO", sigma_phi_deg=1.0,
                      sigma_varphi_deg=1.0)
    c = sample_gains(cfg, corr, 500, 20, RngStream(3))["c"]
    s1 = np.einsum("bkk->k", c)[None]
    s2 = np.sum(np.abs(c) ** 2, axis=0)[None]
    signal, bf, cross, noise, sinr, _ = _breakdown(cfg, s1, s2, len(c), np.array([500.0]), 500)
    received = np.mean(np.sum(np.abs(c) ** 2, axis=-1), axis=0) / cfg.M ** 2
    np.testing.assert_allclose((signal + bf + cross)[:, 0], received, rtol=1e-12)
    np.testing.assert_allclose(sinr, signal / (bf + cross + noise), rtol=0)


def test_report_invariants():
    cfg, corr = _unit(M=16, K=4, p_u=1.0, f_D=2e5, lo_topology="ILO", sigma_phi_deg=2.0, T_c=60)
    rep = hardening_sinr_mc(cfg, corr, 200)
    assert rep.source == MONTE_CARLO and rep.trials == 200
    np.testing.assert_array_equal(rep.sinr, rep.signal / rep.interference)
    for x in (rep.signal, rep.bf_variance, rep.cross_user, rep.noise, rep.sinr):
        assert np.all(x >= 0)
    assert rep.sum_se == pytest.approx(sum_spectral_efficiency(rep))


def test_beamforming_gain():
    gam = {}
    for M in (32, 64):
        cfg, corr = _unit(M=M, K=1, tau=1, sigma_b2=1e-9, p_d=1.0)
        gam[M] = hardening_sinr_mc(cfg, corr, 4000, lags=[2]).sinr[0, 0]
    assert gam[64] / gam[32] == pytest.approx(2.0, rel=0.1)


def test_cross_user_interference_vanishes():
    cross = {}
    for M in (64, 128):
        cfg, corr = _unit(M=M, K=4, p_u=1.0)
        cross[M] = hardening_sinr_mc(cfg, corr, 2000, lags=[5], threads=4).cross_user.mean()
    assert cross[128] / cross[64] == pytest.approx(0.5, rel=0.2)


def test_sinr_decreases_within_first_lobe():
    cfg, corr = _unit(M=32, K=4, p_u=1.0, T_c=500, f_D=0.0005 / 2.5e-8, lo_topology="ILO",
                      sigma_phi_deg=1.0, sigma_varphi_deg=1.0)
    assert 2 * math.pi * cfg.normalized_doppler * cfg.T_c < 2.405
    de = de_rate(cfg, corr)
    assert np.all(np.diff(de.sinr, axis=1) <= 0)
    mc = hardening_sinr_mc(cfg, corr, 2000, lags=[5, 100, 200, 300, 400, 500], threads=4)
    assert np.all(np.diff(mc.sinr.mean(axis=0)) < 0)


def test_requires_two_trials():
    cfg, corr = _unit(M=4, K=1)
    with pytest.raises(ValueError, match="variance undefined"):
        hardening_sinr_mc(cfg, corr, 1)
    with pytest.raises(ValueError):
        hardening_sinr_mc(cfg, corr, 10, lags=[5, 3])


def test_thread_count_does_not_change_results():
    cfg, corr = _unit(M=16, K=4, p_u=1.0, f_D=1e5, lo_topology="ILO", sigma_phi_deg=2.0, T_c=100)
    a = hardening_sinr_mc(cfg, corr, 300, root_seed=9, threads=1)
    b = hardening_sinr_mc(cfg, corr, 300, root_seed=9, threads=4)
    np.testing.assert_array_equal(a.sinr, b.sinr)
    np.testing.assert_array_equal(a.rate_ci, b.rate_ci)
    c = hardening_sinr_mc(cfg, corr, 300, root_seed=10, threads=1)
    assert not np.array_equal(a.sinr, c.sinr)


@pytest.mark.parametrize("topology, fdts, bs_deg, user_deg", [
    ("CLO", 0.0, 0.0, 0.0),
    ("CLO", 0.001, 2.0, 1.0),
    ("ILO", 0.001, 2.0, 1.0),
    ("ILO", 0.0, 3.0, 0.0),
])
def test_matches_exact_scalar_moments(topology, fdts, bs_deg, user_deg):
    n = 150
    cfg, corr = _unit(M=32, K=4, p_u=0.5, T_c=200, f_D=fdts / 2.5e-8, lo_topology=topology,
                      sigma_phi_deg=bs_deg, sigma_varphi_deg=user_deg)
    rep = hardening_sinr_mc(cfg, corr, 20000, lags=[n], threads=4)
    rho = bessel_j0(2 * math.pi * fdts * n)
    s_user = cfg.user_phase_var * n
    s_bs = cfg.bs_phase_var[0] * n
    a = rho * np.exp(-(s_user + s_bs) / 2)
    exact = scalar_mc_sinr(cfg.M, cfg.K, 1.0, cfg.sigma_b2 / cfg.p_p, rho, a, s_user, s_bs,
                           topology, cfg.p_d, cfg.sigma_k2)
    np.testing.assert_allclose(rep.sinr[:, 0], exact, rtol=0.02)


def _reference_case():
    return _unit(M=64, K=8, p_u=1 / 8, p_d=1.0)


def test_reference_case_matches_exact_value():
    cfg, corr = _reference_case()
    rep = hardening_sinr_mc(cfg, corr, 10000, lags=[cfg.tau + 1], threads=4)
    exact = scalar_mc_sinr(64, 8, 1.0, 1.0, 1.0, np.ones(8), np.zeros(8), 0.0, "CLO", 1.0, 1.0)
    assert exact[0] == pytest.approx(3.556, abs=1e-3)
    assert rep.sinr.mean() == pytest.approx(exact[0], rel=0.01)


@pytest.mark.xfail(strict=True, reason="closed form omits an own-beam term worth 5.6% at M=64")
def test_reference_case_within_five_percent_of_closed_form():
    cfg, corr = _reference_case()
    rep = hardening_sinr_mc(cfg, corr, 10000, lags=[cfg.tau + 1], threads=4)
    assert 16 / 4.25 == pytest.approx(3.765, abs=1e-3)
    assert rep.sinr.mean() == pytest.approx(16 / 4.25, rel=0.05)


# rates -----------------------------------------------------------------------
def test_rate_examples():
    cfg = SystemConfig(K=2, T_c=100)
    rate = rate_from_sinr(cfg, cfg.data_lags, np.ones((2, len(cfg.data_lags))))
    np.testing.assert_allclose(rate, (100 - 2) / 100)
    np.testing.assert_allclose(rate_from_sinr(cfg, [50], np.ones((2, 1))), (100 - 2) / 100)
    empty = SystemConfig(K=2, tau=10, T_c=10)
    assert rate_from_sinr(empty, empty.data_lags, np.ones((2, 0))).tolist() == [0.0, 0.0]


def test_sparse_rate_interpolates_linear_sinr():
    cfg = SystemConfig(K=1, T_c=200)
    full = 3.0 - 0.01 * cfg.data_lags
    sparse_lags = np.array([2, 50, 120, 200])
    sparse = 3.0 - 0.01 * sparse_lags
    assert rate_from_sinr(cfg, sparse_lags, sparse[None])[0] == pytest.approx(
        rate_from_sinr(cfg, cfg.data_lags, full[None])[0], rel=1e-12)


def test_sum_spectral_efficiency_examples():
    def report(rates):
        z = np.zeros((len(rates), 1))
        return SinrReport(lags=np.array([1]), signal=z, bf_variance=z, cross_user=z, noise=z,
                          sinr=z, lam=np.ones(1), rate=np.asarray(rates), sum_se=0.0, source=MONTE_CARLO)
    assert sum_spectral_efficiency(report([1.0] * 5)) == 5.0
    assert sum_spectral_efficiency(report([0.5, 1.5])) == 2.0
    cfg, corr = _unit(M=8, K=2, tau=10, T_c=10)
    assert sum_spectral_efficiency(de_rate(cfg, corr)) == 0.0


def test_evaluation_grid():
    cfg = SystemConfig(K=8, T_c=500, mc_lag_points=16)
    lags = mc_eval_lags(cfg)
    assert lags[0] == 9 and lags[-1] == 500 and len(lags) == 16
    assert len(mc_eval_lags(cfg.replace(mc_lag_points=0))) == 492
    fast = cfg.replace(f_D=0.002 / 2.5e-8)  # 2 pi 0.002 500 > first J0 zero
    np.testing.assert_array_equal(mc_eval_lags(fast), fast.data_lags)
