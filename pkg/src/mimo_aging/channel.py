"""Time-varying channels h_{k,n} and effective channels g_{k,n} = Theta_{k,n} h_{k,n}.

Two evolution models are available (``SystemConfig.aging_path``):

``directJakesLag``
    every evaluated symbol n is drawn jointly with n = 0 at the exact Jakes
    correlation J0(2 pi f_D T_s n). Only the (0, n) pairs are meaningful.
``recursiveAR1``
    a genuine first-order recursion whose one-step correlation is
    J0(2 pi f_D T_s); lag-n correlation is therefore J0(.)^n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .numerics import (RandomSource, apply_per_user, as_generator, hermitian, psd_factor,
                       bessel_j0, standard_circular)
from .phase_noise import PhaseState
from .scenario import CorrelationSet


@dataclass(frozen=True)
class ChannelBlock:
    """Channels of one block (or a batch of blocks).

    ``h`` and ``g`` have shape (..., K, T, M) with column t at symbol
    ``times[t]``; ``rho[t]`` is the model correlation between symbol 0 and
    ``times[t]``.
    """

    h: np.ndarray
    g: np.ndarray
    times: np.ndarray
    rho: np.ndarray


def jakes_correlation(cfg: SystemConfig, n) -> np.ndarray:
    """rho_n = J0(2 pi f_D T_s n)."""
    return bessel_j0(2.0 * np.pi * cfg.normalized_doppler * np.asarray(n, dtype=float))


def lag_correlation(cfg: SystemConfig, n) -> np.ndarray:
    """Correlation between h_{k,0} and h_{k,n} under the configured path."""
    n = np.asarray(n, dtype=float)
    if cfg.aging_path == "recursiveAR1":
        return np.power(jakes_correlation(cfg, 1), n)
    return jakes_correlation(cfg, n)


def _spatial(corr: CorrelationSet, w: np.ndarray) -> np.ndarray:
    # R_k^{1/2} w for w of shape (..., K, M)
    return apply_per_user(corr.sqrtR, w, corr.sqrt_diagonal)


def draw_channels(cfg: SystemConfig, corr: CorrelationSet, source: RandomSource, times,
                  n_blocks: int | None = None) -> np.ndarray:
    """True channels at the increasing symbol times ``times`` (times[0] == 0).

    Returns an array of shape (..., K, len(times), M).
    """
    times = np.asarray(times, dtype=int)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and be strictly increasing")
    if corr.K != cfg.K or corr.M != cfg.M:
        raise ValueError("dimension mismatch between config and correlation set")
    rng = as_generator(source)
    lead = () if n_blocks is None else (int(n_blocks),)
    K, M, T = cfg.K, cfg.M, len(times)
    w = standard_circular(rng, lead + (T, K, M))
    out = np.empty(lead + (K, T, M), dtype=complex)
    out[..., :, 0, :] = _spatial(corr, w[..., 0, :, :])
    if cfg.aging_path == "recursiveAR1":
        rho1 = float(jakes_correlation(cfg, 1))
        for t in range(1, T):
            a = rho1 ** (times[t] - times[t - 1])
            innov = _spatial(corr, w[..., t, :, :])
            out[..., :, t, :] = a * out[..., :, t - 1, :] + np.sqrt(max(1.0 - a * a, 0.0)) * innov
    else:
        rho = jakes_correlation(cfg, times)
        for t in range(1, T):
            innov = _spatial(corr, w[..., t, :, :])
            out[..., :, t, :] = rho[t] * out[..., :, 0, :] + np.sqrt(max(1.0 - rho[t] ** 2, 0.0)) * innov
    return out


def effective_channel(h: np.ndarray, phase: PhaseState) -> np.ndarray:
    """g = Theta h with Theta_{k,n} = diag(exp(j(phi_{m,n} + varphi_{k,n})))."""
    theta = phase.phi_bs[..., None, :, :] + phase.varphi_user[..., :, None, :]  # (..., K, M, T)
    return np.exp(1j * np.swapaxes(theta, -1, -2)) * h


def generate_block(cfg: SystemConfig, corr: CorrelationSet, phase: PhaseState,
                   stream: RandomSource, n_blocks: int | None = None) -> ChannelBlock:
    """Channels for the symbol times covered by ``phase`` (normally 0..T_c)."""
    if phase.phi_bs.shape[-2] != cfg.M or phase.varphi_user.shape[-2] != cfg.K:
        raise ValueError("dimension mismatch between config and phase state")
    h = draw_channels(cfg, corr, stream, phase.times, n_blocks)
    g = effective_channel(h, phase)
    return ChannelBlock(h=h, g=g, times=phase.times, rho=lag_correlation(cfg, phase.times))


def aged_channel_direct(g0: np.ndarray, A: np.ndarray, R: np.ndarray,
                        stream: RandomSource) -> np.ndarray:
    """Statistical aging model: A g0 + e with e ~ CN(0, R - A R A^H).

    ``A`` may be a full matrix or the diagonal of one. ``g0`` may carry
    leading batch axes.
    """
    R = np.asarray(R, dtype=complex)
    A = np.asarray(A)
    A_mat = np.diag(A) if A.ndim == 1 else A
    cov = R - A_mat @ R @ hermitian(A_mat)
    cov = 0.5 * (cov + hermitian(cov))
    try:
        factor = psd_factor(cov)
    except ValueError:
        raise ValueError("invalid aging operator for this R_k") from None
    rng = as_generator(stream)
    g0 = np.asarray(g0, dtype=complex)
    e = standard_circular(rng, g0.shape) @ factor.T
    return g0 @ A_mat.T + e
