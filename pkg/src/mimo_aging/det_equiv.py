"""Deterministic equivalents of the MRT downlink SINR and the power-scaling law.

Covariances can be passed either as full stacks (K, M, M) or, when every
matrix is diagonal, as their diagonals (K, M). The diagonal form keeps the
scalar case cheap for very large arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import jakes_correlation
from .config import SystemConfig
from .downlink import DETERMINISTIC, SinrReport, hardening_sinr_mc, rate_from_sinr
from .estimation import aging_diagonals, estimation_filters
from .scenario import CorrelationSet


@dataclass(frozen=True)
class DeTerms:
    """Trace terms of the closed form at one lag.

    ``delta_double_prime[i, k]`` is (1/M) tr A_n(i)^2 D_i R_k.
    """

    n: int
    lambda_bar: float
    delta: np.ndarray
    delta_prime: np.ndarray
    delta_double_prime: np.ndarray
    phase_decay: np.ndarray


# xxxxxxxxxxxxxxx Inputs xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def diagonal_filters(cfg: SystemConfig, r_diag) -> np.ndarray:
    """Diagonal of D_k = R_k (R_k + (sigma_b2/p_p) I)^-1 R_k for diagonal R_k."""
    r = np.asarray(r_diag, dtype=float)
    c = cfg.sigma_b2 / cfg.p_p
    return r * r / (r + c)


def de_inputs(cfg: SystemConfig, corr: CorrelationSet):
    """(R, D) in the cheapest exact representation for ``corr``."""
    if corr.is_scaled_identity:
        r = np.real(np.diagonal(corr.R, axis1=1, axis2=2)).astype(float)
        return r, diagonal_filters(cfg, r)
    _, D = estimation_filters(cfg, corr)
    return corr.R, D


def _check_closed_form(cfg: SystemConfig):
    if not cfg.homogeneous_bs_phase:
        raise ValueError("closed form requires common σ_φ²")


def _trace_terms(R, D, a2):
    """delta (L, K), delta' (L, K), delta'' (L, K, K) for squared aging diagonals a2 (L, K, M)."""
    R = np.asarray(R)
    D = np.asarray(D)
    M = a2.shape[-1]
    if R.ndim == 2 and D.ndim == 2:
        r, d = R.real.astype(float), D.real.astype(float)
        delta = np.einsum("lkm,km->lk", a2, d) / M
        first = np.einsum("lkm,km,km->lk", a2, d, r) / M
        second = np.einsum("lkm,km->lk", a2 ** 2, d ** 2) / M
        dd = np.einsum("lim,im,km->lik", a2, d, r) / M
    else:
        if R.ndim == 2:
            R = np.stack([np.diag(x) for x in R])
        if D.ndim == 2:
            D = np.stack([np.diag(x) for x in D])
        d = np.real(np.diagonal(D, axis1=1, axis2=2))
        delta = np.einsum("lkm,km->lk", a2, d) / M
        dr = np.real(np.einsum("kmj,kjm->km", D, R))  # diag(D_k R_k)
        first = np.einsum("lkm,km->lk", a2, dr) / M
        second = np.einsum("lkm,kmj,lkj->lk", a2, np.abs(D) ** 2, a2) / M
        cross = np.real(np.einsum("imj,kjm->ikm", D, R))  # diag(D_i R_k)
        dd = np.einsum("lim,ikm->lik", a2, cross) / M
    return delta, first - second, dd


def _de_arrays(cfg: SystemConfig, R, D, lags):
    _check_closed_form(cfg)
    lags = np.atleast_1d(np.asarray(lags))
    a2 = aging_diagonals(cfg, lags) ** 2
    delta, dprime, dd = _trace_terms(R, D, a2)
    mean_delta = delta.mean(axis=1)
    # A_n = 0 only up to rounding (J0 at its zero is ~1e-17), so compare with A = I
    unaged = np.mean(_trace_terms(R, D, np.ones((1,) + a2.shape[1:]))[0])
    if np.any(mean_delta <= np.finfo(float).eps * unaged):
        raise ValueError("zero effective channel: normalization undefined")
    lam = 1.0 / mean_delta
    total_var = cfg.user_phase_var + cfg.bs_phase_var[0]
    decay = np.exp(-2.0 * np.multiply.outer(lags.astype(float), total_var))  # (L, K)
    return lam, delta, dprime, dd, decay


# xxxxxxxxxxxxxxx Closed form xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def de_terms(cfg: SystemConfig, R, D, n: int) -> DeTerms:
    """All trace terms of the closed form at lag ``n``.

    Raises for heterogeneous per-antenna BS variances and when every
    effective channel is fully aged (A_n = 0).
    """
    if isinstance(R, CorrelationSet):
        R = R.R
    lam, delta, dprime, dd, decay = _de_arrays(cfg, R, D, [n])
    return DeTerms(n=int(n), lambda_bar=float(lam[0]), delta=delta[0],
                   delta_prime=dprime[0], delta_double_prime=dd[0], phase_decay=decay[0])


def _sinr_parts(cfg, lam, delta, dprime, dd, decay):
    M = cfg.M
    signal = decay * delta ** 2
    bf = dprime / M
    cross = (dd.sum(axis=-2) - np.diagonal(dd, axis1=-2, axis2=-1)) / M
    noise = np.broadcast_to((cfg.sigma_k2 / (cfg.p_d * lam * M))[..., None], delta.shape)
    return signal, bf, cross, np.array(noise)


def de_sinr(terms: DeTerms, cfg: SystemConfig, k: int) -> float:
    """gamma_bar = decay_k delta_k^2 / (delta'_k/M + sigma_k^2/(p_d lam M) + sum_{i!=k} delta''_ik/M)."""
    signal, bf, cross, noise = _sinr_parts(cfg, np.asarray(terms.lambda_bar), terms.delta,
                                           terms.delta_prime, terms.delta_double_prime,
                                           terms.phase_decay)
    den = bf[k] + cross[k] + noise[k]
    if den == 0:
        raise ValueError("zero denominator in SINR")
    return float(signal[k] / den)


def de_rate(cfg: SystemConfig, corr: CorrelationSet | np.ndarray, D=None) -> SinrReport:
    """Closed-form SINR at every data symbol tau+1..T_c and the resulting rates."""
    if isinstance(corr, CorrelationSet):
        R, D_auto = de_inputs(cfg, corr)
        D = D_auto if D is None else D
    else:
        R = corr
        if D is None:
            raise ValueError("D is required when passing raw covariance matrices")
    lags = cfg.data_lags
    if len(lags) == 0:
        z = np.zeros((cfg.K, 0))
        return SinrReport(lags=lags, signal=z, bf_variance=z, cross_user=z, noise=z, sinr=z,
                          lam=np.zeros(0), rate=np.zeros(cfg.K), sum_se=0.0,
                          source=DETERMINISTIC, rate_ci=np.zeros(cfg.K), sum_se_ci=0.0)
    lam, delta, dprime, dd, decay = _de_arrays(cfg, R, D, lags)
    signal, bf, cross, noise = (x.T for x in _sinr_parts(cfg, lam, delta, dprime, dd, decay))
    den = bf + cross + noise
    if np.any(den == 0):
        raise ValueError("zero denominator in SINR")
    sinr = signal / den
    rate = rate_from_sinr(cfg, lags, sinr)
    return SinrReport(lags=lags, signal=signal, bf_variance=bf, cross_user=cross, noise=noise,
                      sinr=sinr, lam=lam, rate=rate, sum_se=float(rate.sum()),
                      source=DETERMINISTIC, rate_ci=np.zeros(cfg.K), sum_se_ci=0.0)


# xxxxxxxxxxxxxxx Power scaling xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _scaling_common(cfg, k, n, R, m):
    _check_closed_form(cfg)
    rho = float(jakes_correlation(cfg, n))
    s = cfg.user_phase_var[k] + cfg.bs_phase_var[0]
    if R is None:
        r2 = 1.0
    else:
        R = np.asarray(R)
        r2 = float(np.real((R @ R)[m, m])) if R.ndim == 2 else float(R[m] ** 2)
    return rho ** 2 * np.exp(-3.0 * s * n) * r2


def power_scaling_sinr(cfg: SystemConfig, k: int, n: int, q: float, E_u: float, E_d: float,
                       m: int = 0, R=None, q_uplink: float | None = None) -> float:
    """Large-M SINR when p_u = E_u / M^q_u and p_d = E_d / M^q.

    tau E_d E_u / (sigma_b2 sigma_k2 M^(q + q_u - 1)) J0^2 exp(-3 s n) [R_k^2]_mm,
    with q_u = q unless given. ``R`` is user k's covariance (identity when
    omitted) or its diagonal. Valid in the low pilot-SNR regime
    p_p max eig(R_k) / sigma_b2 << 1, where D_k ~ (p_p / sigma_b2) R_k^2.
    """
    if q <= 0:
        raise ValueError("power-scaling exponent q must be > 0")
    qu = q if q_uplink is None else q_uplink
    base = cfg.tau * E_d * E_u / (cfg.sigma_b2 * cfg.sigma_k2)
    return float(base * cfg.M ** (1.0 - q - qu) * _scaling_common(cfg, k, n, R, m))


def power_scaling_limit(cfg: SystemConfig, k: int, n: int, E_u: float, E_d: float,
                        m: int = 0, R=None) -> float:
    """M-independent SINR reached at q = 1/2 (the value above with M^0)."""
    base = cfg.tau * E_d * E_u / (cfg.sigma_b2 * cfg.sigma_k2)
    return float(base * _scaling_common(cfg, k, n, R, m))


def power_scaling_limit_tau_squared(cfg: SystemConfig, k: int, n: int, E_u: float, E_d: float,
                                    m: int = 0, R=None) -> float:
    """Variant of the limit carrying tau^2 instead of tau, reported for comparison."""
    return cfg.tau * power_scaling_limit(cfg, k, n, E_u, E_d, m, R)


# xxxxxxxxxxxxxxx Diagnostics xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
@dataclass(frozen=True)
class RatioDiagnostic:
    """Monte-Carlo / closed-form SINR ratio per user and lag.

    ``excess_exponent[k, l]`` is log(ratio) / (2 s_k n): the decay rate, in
    units of the total phase-noise variance s_k, by which the closed form
    falls faster than the simulation.
    """

    lags: np.ndarray
    ratio: np.ndarray
    excess_exponent: np.ndarray
    mc: SinrReport


def mc_de_ratio(cfg: SystemConfig, corr: CorrelationSet, trials: int, lags=None,
                root_seed: int = 0, threads: int = 1) -> RatioDiagnostic:
    mc = hardening_sinr_mc(cfg, corr, trials, lags=lags, root_seed=root_seed, threads=threads)
    R, D = de_inputs(cfg, corr)
    lam, delta, dprime, dd, decay = _de_arrays(cfg, R, D, mc.lags)
    signal, bf, cross, noise = (x.T for x in _sinr_parts(cfg, lam, delta, dprime, dd, decay))
    de = signal / (bf + cross + noise)
    ratio = mc.sinr / de
    s = (cfg.user_phase_var + cfg.bs_phase_var[0])[:, None] * mc.lags[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(s > 0, np.log(ratio) / (2.0 * s), 0.0)
    return RatioDiagnostic(lags=mc.lags, ratio=ratio, excess_exponent=excess, mc=mc)
