import math

import numpy as np
import pytest

from mimo_aging.config import SystemConfig
from mimo_aging.numerics import RngStream
from mimo_aging.phase_noise import (PhaseState, evolve_phase, expected_phase_decay, sample_phases,
                                    theta_matrix)

DEG2 = (2 * math.pi / 180) ** 2


def test_zero_variance_gives_zero_phases():
    cfg = SystemConfig(M=4, K=2, T_c=20)
    st = evolve_phase(cfg, RngStream(0), n_blocks=3)
    assert st.phi_bs.shape == (3, 4, 21) and st.varphi_user.shape == (3, 2, 21)
    assert not np.any(st.phi_bs) and not np.any(st.varphi_user)


def test_clo_rows_identical():
    cfg = SystemConfig(M=5, K=2, T_c=30, lo_topology="CLO", sigma_phi_deg=2.0)
    st = evolve_phase(cfg, RngStream(1), n_blocks=4)
    assert np.all(st.phi_bs == st.phi_bs[:, :1, :])
    assert np.all(np.ptp(st.phi_bs, axis=1) == 0.0)


def test_ilo_rows_differ_and_increment_variance():
    cfg = SystemConfig(M=4, K=2, T_c=50, lo_topology="ILO", sigma_phi_deg=2.0, sigma_varphi_deg=1.0)
    st = evolve_phase(cfg, RngStream(2), n_blocks=400)
    inc = np.diff(st.phi_bs, axis=-1)
    assert np.var(inc) == pytest.approx(DEG2, rel=0.05)
    uinc = np.diff(st.varphi_user, axis=-1)
    assert np.var(uinc) == pytest.approx(DEG2 / 4, rel=0.05)
    assert not np.allclose(st.phi_bs[:, 0], st.phi_bs[:, 1])


def test_slo_variance_accumulates_linearly():
    sig = (2.0, 0.0, 1.0)
    cfg = SystemConfig(M=3, K=1, T_c=10, lo_topology="SLO", sigma_phi_deg=sig)
    st = sample_phases(cfg, RngStream(3), [0, 10], n_blocks=10000)
    var = np.var(st.phi_bs[:, :, 1], axis=0)
    assert var[0] == pytest.approx(10 * DEG2, rel=0.05)
    assert var[1] == 0.0
    assert var[2] == pytest.approx(10 * DEG2 / 4, rel=0.05)


def test_ilo_and_equal_slo_have_same_marginals():
    ilo = SystemConfig(M=3, K=1, lo_topology="ILO", sigma_phi_deg=2.0)
    slo = SystemConfig(M=3, K=1, lo_topology="SLO", sigma_phi_deg=(2.0, 2.0, 2.0))
    a = sample_phases(ilo, RngStream(4), [0, 5, 40], n_blocks=20000).phi_bs
    b = sample_phases(slo, RngStream(5), [0, 5, 40], n_blocks=20000).phi_bs
    for t in (1, 2):
        assert abs(a[..., t].mean() - b[..., t].mean()) < 4 * math.sqrt(2 * 40 * DEG2 / 20000)
        assert a[..., t].var() == pytest.approx(b[..., t].var(), rel=0.05)


def test_sparse_sampling_matches_dense_statistics():
    cfg = SystemConfig(M=2, K=1, T_c=100, lo_topology="ILO", sigma_phi_deg=2.0)
    sparse = sample_phases(cfg, RngStream(6), [0, 100], n_blocks=20000).phi_bs[..., 1]
    dense = evolve_phase(cfg, RngStream(7), n_blocks=20000).phi_bs[..., 100]
    assert sparse.var() == pytest.approx(dense.var(), rel=0.05)


def test_phase_decay_law():
    cfg = SystemConfig(M=2, K=1, lo_topology="ILO", sigma_phi_deg=2.0, sigma_varphi_deg=2.0)
    n = 20
    st = sample_phases(cfg, RngStream(8), [0, n], n_blocks=50000)
    z = np.exp(1j * (st.total_phase(0, n) - st.total_phase(0, 0)))[:, 0]
    expected = expected_phase_decay(cfg, 0, n)[0]
    assert expected == pytest.approx(math.exp(-2 * DEG2 * n / 2))
    se = math.sqrt(np.mean(np.abs(z - z.mean()) ** 2) / len(z))
    assert abs(z.mean() - expected) < 3 * se


def test_initial_state_continues():
    cfg = SystemConfig(M=2, K=1, T_c=10, lo_topology="ILO", sigma_phi_deg=1.0)
    first = evolve_phase(cfg, RngStream(9))
    second = evolve_phase(cfg, RngStream(10), initial=first)
    np.testing.assert_array_equal(second.phi_bs[:, 0], first.phi_bs[:, -1])


def test_theta_matrix_examples():
    times = np.array([0, 1])
    zero = PhaseState(np.zeros((3, 2)), np.zeros((1, 2)), "ILO", times)
    np.testing.assert_array_equal(theta_matrix(zero, 0, 1), np.ones(3))
    pi = PhaseState(np.full((3, 2), math.pi), np.zeros((1, 2)), "ILO", times)
    np.testing.assert_allclose(theta_matrix(pi, 0, 1), -np.ones(3), atol=1e-15)
    cfg = SystemConfig(M=3, K=1, T_c=5, lo_topology="ILO", sigma_phi_deg=3.0, sigma_varphi_deg=1.0)
    t = theta_matrix(evolve_phase(cfg, RngStream(11)), 0, 4)
    np.testing.assert_allclose(t * np.conj(t), np.ones(3))
    with pytest.raises(IndexError):
        theta_matrix(zero, 2, 1)
    with pytest.raises(IndexError):
        zero.column(7)
