"""MRT precoding and Monte-Carlo evaluation of the hardening-bound SINR.

Effective gains are computed from the physical received signal
y_{k,n} = sqrt(p_d) h_{k,n}^H Theta_{k,n} s_n with s_n = sqrt(lambda) F_n x_n
and F_n = [A_n(1) g_hat_1, ..., A_n(K) g_hat_K].

Power terms are reported on the scale of the closed forms: the desired
signal is |E c_kk|^2 / M^2, the beamforming-gain uncertainty Var c_kk / M^2,
the cross-user term sum_i E|c_ki|^2 / M^2 and the noise
sigma_k^2 / (p_d lam M), where ``lam`` is the per-antenna normalisation
1 / E[(1/(K M)) tr F F^H] (``lam / M`` is the physical scaling).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import draw_channels
from .config import SystemConfig
from .estimation import aging_diagonals, estimation_filters, observe_pilots
from .numerics import (RngStream, apply_per_user, diagonal_if_diagonal, j0_first_zero,
                       standard_circular)
from .phase_noise import sample_phases
from .scenario import CorrelationSet

MONTE_CARLO = "monteCarlo"
DETERMINISTIC = "deterministicEquivalent"

_MAX_GROUPS = 100
_BATCH = 256
_BATCH_ELEMENTS = 1 << 21  # complex channel samples per sub-batch
# stream-path tags
_TAG_TRIALS = 0
_TAG_LAMBDA = 1


@dataclass(frozen=True)
class Precoder:
    """MRT precoder F (..., M, K) with its power normalisation.

    ``lam`` is the per-antenna normalisation 1 / E[(1/(K M)) tr F F^H];
    ``lam_physical = lam / M`` is the literal constraint value
    1 / E[(1/K) tr F F^H].
    """

    F: np.ndarray
    lam: float

    @property
    def M(self) -> int:
        return self.F.shape[-2]

    @property
    def lam_physical(self) -> float:
        return self.lam / self.M

    def transmit(self, x: np.ndarray) -> np.ndarray:
        """s = sqrt(lam_physical) F x for symbols x of shape (..., K)."""
        return math.sqrt(self.lam_physical) * np.einsum("...mk,...k->...m", self.F, x)


@dataclass(frozen=True)
class SinrReport:
    """Per-user, per-symbol SINR breakdown and resulting rates.

    Arrays indexed (k, l) refer to user k and evaluation symbol ``lags[l]``.
    """

    lags: np.ndarray
    signal: np.ndarray
    bf_variance: np.ndarray
    cross_user: np.ndarray
    noise: np.ndarray
    sinr: np.ndarray
    lam: np.ndarray
    rate: np.ndarray
    sum_se: float
    source: str
    rate_ci: np.ndarray = field(default=None)
    sum_se_ci: float = 0.0
    trials: int = 0

    @property
    def interference(self) -> np.ndarray:
        return self.bf_variance + self.cross_user + self.noise


# xxxxxxxxxxxxxxx Precoding xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def mrt_precoder(g_hat: np.ndarray, aging_diag: np.ndarray, lam: float | None = None) -> Precoder:
    """Column k of F is A_n(k) g_hat_k.

    Parameters
    ----------
    g_hat : (..., K, M) channel estimates. Leading axes are realisations.
    aging_diag : (K, M) diagonals of each user's aging operator.
    lam : normalisation to use. By default it is the sample-mean estimate
        over all realisations in ``g_hat``.
    """
    g_hat = np.asarray(g_hat)
    cols = np.asarray(aging_diag)[..., :, :] * g_hat
    F = np.swapaxes(cols, -1, -2)
    if lam is None:
        K, M = g_hat.shape[-2:]
        power = np.mean(np.sum(np.abs(cols) ** 2, axis=(-1, -2))) / (K * M)
        lam = 1.0 / power
    return Precoder(F=F, lam=float(lam))


# xxxxxxxxxxxxxxx Rates xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def mc_eval_lags(cfg: SystemConfig) -> np.ndarray:
    """Data-symbol times evaluated by Monte-Carlo.

    A sparse grid of ``mc_lag_points`` symbols (end points included) is used
    while the Jakes correlation stays inside its first lobe over the block,
    where the SINR varies slowly in n. Past the first zero the SINR
    oscillates and every data symbol is evaluated; ``mc_lag_points = 0``
    forces that as well.
    """
    lags = cfg.data_lags
    beyond_lobe = 2.0 * np.pi * cfg.normalized_doppler * cfg.T_c > j0_first_zero()
    if cfg.mc_lag_points == 0 or beyond_lobe or len(lags) <= cfg.mc_lag_points:
        return lags
    pick = np.unique(np.round(np.linspace(lags[0], lags[-1], cfg.mc_lag_points)).astype(int))
    return pick


def rate_from_sinr(cfg: SystemConfig, lags, sinr: np.ndarray) -> np.ndarray:
    """(1/T_c) sum_{n=1}^{T_c - tau} log2(1 + gamma_{tau + n}) for every user.

    ``sinr`` has shape (..., L) over the increasing symbol times ``lags``;
    when these do not cover every data symbol the SINR is linearly
    interpolated in between.
    """
    sinr = np.asarray(sinr, dtype=float)
    data = cfg.data_lags
    if len(data) == 0:
        return np.zeros(sinr.shape[:-1])
    lags = np.asarray(lags)
    if len(lags) == len(data) and np.array_equal(lags, data):
        full = sinr
    elif len(lags) == 1:
        full = np.repeat(sinr, len(data), axis=-1)
    else:
        flat = sinr.reshape(-1, sinr.shape[-1])
        full = np.stack([np.interp(data, lags, row) for row in flat]).reshape(sinr.shape[:-1] + (len(data),))
    return np.sum(np.log2(1.0 + full), axis=-1) / cfg.T_c


def sum_spectral_efficiency(report: SinrReport) -> float:
    return float(np.sum(report.rate))


# xxxxxxxxxxxxxxx Monte-Carlo engine xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _group_sizes(trials: int) -> list[int]:
    groups = min(trials, _MAX_GROUPS)
    base, extra = divmod(trials, groups)
    return [base + (1 if g < extra else 0) for g in range(groups)]


def _batch_size(cfg: SystemConfig, n_times: int) -> int:
    per_trial = cfg.K * cfg.M * n_times
    return int(max(1, min(_BATCH, _BATCH_ELEMENTS // per_trial)))


def _draw_estimates(cfg, corr, filt, rng, times, batch):
    """Channels, phases and LMMSE estimates; ``filt`` is (W, diagonal of W or None)."""
    h = draw_channels(cfg, corr, rng, times, batch)
    phases = sample_phases(cfg, rng, times, batch)
    theta0 = phases.phi_bs[:, None, :, 0] + phases.varphi_user[:, :, None, 0]
    g0 = np.exp(1j * theta0) * h[:, :, 0, :]
    y = observe_pilots(g0, cfg.sigma_b2, cfg.p_p, rng)
    g_hat = apply_per_user(filt[0], y, filt[1])
    return h, phases, g_hat


def _lambda_group(cfg, corr, filt, adiag, stream, size):
    """Sum over realisations of (1/(K M)) tr F F^H for every lag."""
    rng = stream.generator()
    acc = np.zeros(adiag.shape[0])
    done = 0
    while done < size:
        b = min(_batch_size(cfg, 1), size - done)
        _, _, g_hat = _draw_estimates(cfg, corr, filt, rng, np.array([0]), b)
        p = np.abs(g_hat) ** 2  # (B, K, M)
        acc += np.einsum("lkm,bkm->l", adiag ** 2, p) / (cfg.K * cfg.M)
        done += b
    return acc


def _gain_group(cfg, corr, filt, adiag, lags, stream, size):
    """Sufficient statistics of the effective gains c_ki for one group."""
    rng = stream.generator()
    L, K = len(lags), cfg.K
    step = _batch_size(cfg, L + 1)
    s1 = np.zeros((L, K), dtype=complex)
    s2 = np.zeros((L, K, K))
    times = np.concatenate(([0], lags))
    done = 0
    while done < size:
        b = min(step, size - done)
        h, phases, g_hat = _draw_estimates(cfg, corr, filt, rng, times, b)
        # phases and channels at the evaluated symbols, (B, K, L, M)
        # h^H Theta split into the BS rotation (per antenna) and the user one
        bs_rot = np.exp(1j * np.swapaxes(phases.phi_bs[:, :, 1:], -1, -2))  # (B, L, M)
        user_rot = np.exp(1j * np.swapaxes(phases.varphi_user[:, :, 1:], -1, -2))  # (B, L, K)
        left = np.conj(np.swapaxes(h[:, :, 1:, :], 1, 2)) * bs_rot[:, :, None, :]  # (B, L, K, M)
        right = adiag[None] * g_hat[:, None]  # (B, L, K, M): columns of F
        c = left @ np.swapaxes(right, -1, -2)  # (B, L, K, K): c[b, l, k, i]
        c *= user_rot[..., None]
        s1 += np.einsum("blkk->lk", c)
        s2 += np.sum(c.real ** 2 + c.imag ** 2, axis=0)
        done += b
    return s1, s2


def _breakdown(cfg, s1, s2, n, lam_sum, n_lam):
    """SINR terms from (possibly leave-one-out) sufficient statistics.

    s1 (..., L, K), s2 (..., L, K, K), n (...), lam_sum (..., L), n_lam (...).
    """
    M, K = cfg.M, cfg.K
    n = np.asarray(n, dtype=float)
    mean_c = s1 / n[..., None, None]
    second = s2 / n[..., None, None, None]
    own = np.diagonal(second, axis1=-2, axis2=-1)  # E|c_kk|^2
    signal = np.abs(mean_c) ** 2 / M ** 2
    bf = np.maximum(own - np.abs(mean_c) ** 2, 0.0) / M ** 2
    cross = (np.sum(second, axis=-1) - own) / M ** 2
    lam = np.asarray(n_lam, dtype=float)[..., None] / lam_sum  # (..., L)
    # (..., L, K) -> (..., K, L)
    signal = np.swapaxes(signal, -1, -2)
    bf = np.swapaxes(bf, -1, -2)
    cross = np.swapaxes(cross, -1, -2)
    noise = np.broadcast_to((cfg.sigma_k2 / (cfg.p_d * lam * M))[..., None, :], signal.shape).copy()
    sinr = signal / (bf + cross + noise)
    return signal, bf, cross, noise, sinr, lam


def hardening_sinr_mc(cfg: SystemConfig, corr: CorrelationSet, trials: int, lags=None,
                      root_seed: int = 0, stream_path=(), threads: int = 1) -> SinrReport:
    """Monte-Carlo hardening-bound SINR and rate for every user.

    Parameters
    ----------
    cfg, corr : scenario
    trials : number of independent channel/phase realisations (>= 2)
    lags : data-symbol times to evaluate (default :func:`mc_eval_lags`)
    root_seed, stream_path : random streams are
        ``RngStream(root_seed, stream_path + (tag, group))`` so results do
        not depend on ``threads``.
    threads : worker threads used for trial groups.

    Returns
    -------
    SinrReport
        ``rate_ci`` / ``sum_se_ci`` are 95% half-widths from a
        delete-one-group jackknife.
    """
    if trials < 2:
        raise ValueError("at least two trials are needed (variance undefined)")
    lags = mc_eval_lags(cfg) if lags is None else np.atleast_1d(np.asarray(lags, dtype=int))
    if np.any(np.diff(lags) <= 0) or lags[0] < 1:
        raise ValueError("lags must be strictly increasing symbol times >= 1")
    W, _ = estimation_filters(cfg, corr)
    filt = (W, diagonal_if_diagonal(W))
    adiag = aging_diagonals(cfg, lags)  # (L, K, M)
    sizes = _group_sizes(trials)
    base = RngStream(root_seed, tuple(stream_path))

    def lam_job(g):
        return _lambda_group(cfg, corr, filt, adiag, base.child(_TAG_LAMBDA, g), sizes[g])

    def gain_job(g):
        return _gain_group(cfg, corr, filt, adiag, lags, base.child(_TAG_TRIALS, g), sizes[g])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lam_parts = list(pool.map(lam_job, range(len(sizes))))
            gain_parts = list(pool.map(gain_job, range(len(sizes))))
    else:
        lam_parts = [lam_job(g) for g in range(len(sizes))]
        gain_parts = [gain_job(g) for g in range(len(sizes))]

    lam_g = np.stack(lam_parts)  # (G, L)
    s1_g = np.stack([p[0] for p in gain_parts])  # (G, L, K)
    s2_g = np.stack([p[1] for p in gain_parts])  # (G, L, K, K)
    n_g = np.asarray(sizes, dtype=float)

    tot = (s1_g.sum(axis=0), s2_g.sum(axis=0), n_g.sum(), lam_g.sum(axis=0), n_g.sum())
    signal, bf, cross, noise, sinr, lam = _breakdown(cfg, *tot)
    rate = rate_from_sinr(cfg, lags, sinr)

    G = len(sizes)
    if G > 1:
        loo = _breakdown(cfg, tot[0] - s1_g, tot[1] - s2_g, tot[2] - n_g,
                         tot[3] - lam_g, tot[4] - n_g)
        rates_loo = rate_from_sinr(cfg, lags, loo[4])  # (G, K)
        jk = lambda x: 1.96 * np.sqrt((G - 1) / G * np.sum((x - x.mean(axis=0)) ** 2, axis=0))
        rate_ci = jk(rates_loo)
        sum_ci = float(jk(rates_loo.sum(axis=1)))
    else:
        rate_ci = np.full(cfg.K, np.nan)
        sum_ci = float("nan")

    return SinrReport(lags=lags, signal=signal, bf_variance=bf, cross_user=cross,
                      noise=noise, sinr=sinr, lam=lam, rate=rate, sum_se=float(rate.sum()),
                      source=MONTE_CARLO, rate_ci=rate_ci, sum_se_ci=sum_ci, trials=trials)


def sample_gains(cfg: SystemConfig, corr: CorrelationSet, trials: int, lag: int,
                 stream: RngStream):
    """Raw realisations for diagnostics and tests.

    Returns a dict with the effective gains ``c`` (trials, K, K), the
    estimates ``g_hat``, the effective channels ``g0``/``gn`` and the
    aging diagonals used by the precoder.
    """
    W, _ = estimation_filters(cfg, corr)
    filt = (W, diagonal_if_diagonal(W))
    adiag = aging_diagonals(cfg, [lag])[0]
    rng = stream.generator()
    times = np.array([0, lag]) if lag > 0 else np.array([0])
    h, phases, g_hat = _draw_estimates(cfg, corr, filt, rng, times, trials)
    t = len(times) - 1
    theta = phases.phi_bs[:, None, :, :] + phases.varphi_user[:, :, None, :]  # (B, K, M, T)
    g = np.exp(1j * np.moveaxis(theta, -1, -2)) * h  # (B, K, T, M)
    left = np.conj(h[:, :, t, :]) * np.exp(1j * theta[..., t])
    right = adiag[None] * g_hat
    c = left @ np.swapaxes(right, -1, -2)
    return {"c": c, "g_hat": g_hat, "g0": g[:, :, 0, :], "gn": g[:, :, t, :],
            "h0": h[:, :, 0, :], "hn": h[:, :, t, :], "aging": adiag}


def random_symbols(stream: RngStream, shape) -> np.ndarray:
    return standard_circular(stream.generator(), shape)
