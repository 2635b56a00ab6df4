"""Uplink training, joint channel/phase-noise LMMSE estimation and the
MSE-optimal aging operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .numerics import RandomSource, as_generator, hermitian, solve_hpd, standard_circular
from .channel import ChannelBlock, jakes_correlation
from .scenario import CorrelationSet


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimates g_hat (..., K, M), filters W_k and covariances D_k (K, M, M)."""

    g_hat: np.ndarray
    W: np.ndarray
    D: np.ndarray
    p_p: float


@dataclass(frozen=True)
class AgingOperator:
    """A_n = scalar_part * diag(diag_part) for user ``k`` at lag ``n``.

    ``scalar_part`` is rho_n exp(-s_varphi_k n / 2) and ``diag_part[m]`` is
    exp(-s_phi_m n / 2).
    """

    n: int
    k: int
    scalar_part: float
    diag_part: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return self.scalar_part * self.diag_part

    @property
    def as_matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)

    @property
    def is_scalar(self) -> bool:
        return bool(np.all(self.diag_part == self.diag_part[0]))


# xxxxxxxxxxxxxxx Training phase xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def observe_pilots(g0: np.ndarray, sigma_b2: float, p_p: float, source: RandomSource) -> np.ndarray:
    """De-spread pilot observation g0 + z / sqrt(p_p), z ~ CN(0, sigma_b2 I)."""
    g0 = np.asarray(g0, dtype=complex)
    if sigma_b2 == 0:
        return g0.copy()
    rng = as_generator(source)
    z = standard_circular(rng, g0.shape)
    return g0 + np.sqrt(sigma_b2 / p_p) * z


def pilot_observe(cfg: SystemConfig, block: ChannelBlock | np.ndarray,
                  stream: RandomSource) -> np.ndarray:
    """Noisy observations y_k of g_{k,0} for every user, shape (..., K, M).

    ``block`` is a ChannelBlock (its n = 0 column is used) or the array of
    effective channels g_{k,0} itself. The orthonormal pilot matrix is
    eliminated analytically; phase noise is frozen over the pilot burst.
    """
    if cfg.tau < cfg.K:
        raise ValueError("pilot shortage: tau < K")
    g0 = block.g[..., :, 0, :] if isinstance(block, ChannelBlock) else block
    return observe_pilots(g0, cfg.sigma_b2, cfg.p_p, stream)


def lmmse_filter(R: np.ndarray, sigma_b2: float, p_p: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (W, D) with W = (I + (sigma_b2/p_p) R^-1)^-1 and D = W R.

    Computed as W = R (R + c I)^-1 through a Hermitian solve, which never
    forms R^-1.
    """
    R = np.asarray(R, dtype=complex)
    M = R.shape[0]
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ValueError("singular R_k: covariance must be positive definite") from None
    c = sigma_b2 / p_p
    if c == 0:
        return np.eye(M, dtype=complex), R.copy()
    X = solve_hpd(R + c * np.eye(M), R)  # (R + cI)^-1 R
    W = hermitian(X)
    D = R @ X
    D = 0.5 * (D + hermitian(D))
    return W, D


def lmmse_estimate(obs: np.ndarray, R: np.ndarray, sigma_b2: float, p_p: float):
    """LMMSE estimate of one user's effective channel.

    Returns ``(g_hat, D)`` where ``obs`` may carry leading batch axes.
    """
    W, D = lmmse_filter(R, sigma_b2, p_p)
    return np.asarray(obs) @ W.T, D


def estimation_filters(cfg: SystemConfig, corr: CorrelationSet):
    """Stacked (W, D), each of shape (K, M, M)."""
    pairs = [lmmse_filter(corr.R[k], cfg.sigma_b2, cfg.p_p) for k in range(cfg.K)]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def estimate_channels(cfg: SystemConfig, corr: CorrelationSet, obs: np.ndarray) -> ChannelEstimate:
    W, D = estimation_filters(cfg, corr)
    g_hat = np.einsum("kmn,...kn->...km", W, obs)
    return ChannelEstimate(g_hat=g_hat, W=W, D=D, p_p=cfg.p_p)


# xxxxxxxxxxxxxxx Aging operator xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def aging_operator(cfg: SystemConfig, k: int, n: int) -> AgingOperator:
    """MSE-optimal aging operator of user k at lag n.

    A_n = J0(2 pi f_D T_s n) exp(-s_varphi_k n / 2) diag(exp(-s_phi_m n / 2)).
    """
    if n < 0:
        raise ValueError("lag must be >= 0")
    rho = float(jakes_correlation(cfg, n))
    scalar = rho * np.exp(-cfg.user_phase_var[k] * n / 2.0)
    return AgingOperator(n=int(n), k=int(k), scalar_part=float(scalar),
                         diag_part=np.exp(-cfg.bs_phase_var * n / 2.0))


def aging_diagonals(cfg: SystemConfig, lags, correlation=None) -> np.ndarray:
    """Diagonals of A_n for every lag and user, shape (L, K, M).

    ``correlation`` overrides the temporal factor (defaults to the Jakes
    value, which is what the estimator is designed for).
    """
    lags = np.asarray(lags, dtype=float)
    rho = jakes_correlation(cfg, lags) if correlation is None else np.asarray(correlation, dtype=float)
    user = np.exp(-np.multiply.outer(lags, cfg.user_phase_var) / 2.0)  # (L, K)
    bs = np.exp(-np.multiply.outer(lags, cfg.bs_phase_var) / 2.0)  # (L, M)
    return rho[:, None, None] * user[:, :, None] * bs[:, None, :]


def mse_of_operator(candidate: np.ndarray, cfg: SystemConfig, R: np.ndarray, k: int, n: int) -> float:
    """tr E[(g_n - A g_0)(g_n - A g_0)^H] for a real diagonal candidate A.

    ``candidate`` is either the M diagonal values or the diagonal matrix.
    """
    cand = np.asarray(candidate, dtype=float)
    a = np.diag(cand) if cand.ndim == 2 else cand
    R = np.asarray(R, dtype=complex)
    rho = float(jakes_correlation(cfg, n))
    decay_user = np.exp(-cfg.user_phase_var[k] * n / 2.0)
    dphi = np.exp(-cfg.bs_phase_var * n / 2.0)
    A = np.diag(a)
    cross = rho * decay_user * A @ R @ np.diag(dphi)
    E = R + A @ R @ A.T - cross - hermitian(cross)
    return float(np.real(np.trace(E)))
