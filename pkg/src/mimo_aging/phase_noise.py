"""Wiener phase noise at the BS oscillator(s) and at every user.

Phases are kept unwrapped and start at zero at the estimation instant
n = 0; all quantities of interest depend only on the increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .numerics import RandomSource, as_generator


@dataclass(frozen=True)
class PhaseState:
    """Phase trajectories over one (or a batch of) coherence block(s).

    ``phi_bs`` has shape (..., M, T) and ``varphi_user`` (..., K, T) where
    column t is symbol time ``times[t]``. For a full block ``times`` is
    0..T_c; the leading axis, when present, indexes independent blocks.
    """

    phi_bs: np.ndarray
    varphi_user: np.ndarray
    topology: str
    times: np.ndarray

    def column(self, n: int) -> int:
        idx = np.searchsorted(self.times, n)
        if idx >= len(self.times) or self.times[idx] != n:
            raise IndexError(f"symbol index {n} not in this phase state")
        return int(idx)

    def total_phase(self, k: int, n: int) -> np.ndarray:
        """theta_{k,n}^{(m)} = phi_{m,n} + varphi_{k,n} for all m."""
        if not 0 <= k < self.varphi_user.shape[-2]:
            raise IndexError(f"user index {k} out of range")
        c = self.column(n)
        return self.phi_bs[..., :, c] + self.varphi_user[..., k, c][..., None]


def _increments(rng, variances, shape_lead, steps, shared):
    """Gaussian increments with per-row variance times ``steps`` lengths.

    ``steps`` holds the number of symbols spanned by each increment, so a
    jump over d symbols has variance d * sigma^2.
    """
    rows = len(variances)
    scale = np.sqrt(np.outer(variances, steps))  # (rows, S)
    if shared:
        z = rng.standard_normal(shape_lead + (1, len(steps)))
        z = np.broadcast_to(z, shape_lead + (rows, len(steps)))
    else:
        z = rng.standard_normal(shape_lead + (rows, len(steps)))
    return z * scale


def sample_phases(cfg: SystemConfig, source: RandomSource, times,
                  n_blocks: int | None = None, initial: PhaseState | None = None) -> PhaseState:
    """Sample the Wiener processes at the increasing symbol times ``times``.

    Phases at n = 0 are zero, or the last column of ``initial``.
    Increments between consecutive requested times are drawn in one step
    (exact for a Wiener process), so sparse evaluation grids are cheap.
    """
    times = np.asarray(times, dtype=int)
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be a non-empty strictly increasing sequence of symbols >= 0")
    var_bs = cfg.bs_phase_var
    var_user = cfg.user_phase_var
    if len(var_bs) != cfg.M or len(var_user) != cfg.K:
        raise ValueError("topology/variance-list length mismatch")
    rng = as_generator(source)
    lead = () if n_blocks is None else (int(n_blocks),)

    if initial is None:
        start_bs = np.zeros(lead + (cfg.M,))
        start_user = np.zeros(lead + (cfg.K,))
    else:
        start_bs = np.broadcast_to(initial.phi_bs[..., :, -1], lead + (cfg.M,))
        start_user = np.broadcast_to(initial.varphi_user[..., :, -1], lead + (cfg.K,))
    steps = np.diff(np.concatenate(([0], times))).astype(float)

    shared = cfg.lo_topology == "CLO"
    d_bs = _increments(rng, var_bs, lead, steps, shared)
    d_user = _increments(rng, var_user, lead, steps, False)
    phi = start_bs[..., None] + np.cumsum(d_bs, axis=-1)
    varphi = start_user[..., None] + np.cumsum(d_user, axis=-1)
    return PhaseState(phi_bs=phi, varphi_user=varphi, topology=cfg.lo_topology, times=times)


def evolve_phase(cfg: SystemConfig, stream: RandomSource, initial: PhaseState | None = None,
                 n_blocks: int | None = None) -> PhaseState:
    """Full trajectories for symbols 0..T_c.

    Phases start at 0 (or at the last column of ``initial``). CLO draws one
    increment per symbol shared by every antenna, ILO/SLO draw M
    independent ones (per-antenna variances for SLO); users are always
    independent.
    """
    return sample_phases(cfg, stream, np.arange(cfg.T_c + 1), n_blocks, initial)


def theta_matrix(state: PhaseState, k: int, n: int) -> np.ndarray:
    """Diagonal of Theta_{k,n}: exp(j (phi_{m,n} + varphi_{k,n})), length M."""
    return np.exp(1j * state.total_phase(k, n))


def expected_phase_decay(cfg: SystemConfig, k: int, n) -> np.ndarray:
    """E[exp(j(theta_{k,n} - theta_{k,0}))] per antenna: exp(-(s_phi_m + s_varphi_k) n / 2)."""
    n = np.asarray(n, dtype=float)
    total = cfg.bs_phase_var + cfg.user_phase_var[k]
    return np.exp(-np.multiply.outer(n, total) / 2.0)
