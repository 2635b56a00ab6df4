"""Single-cell topology: user drop, large-scale gains and covariances R_k."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .numerics import RandomSource, as_generator, diagonal_if_diagonal, hermitian_sqrt

_UNSET = object()


@dataclass(frozen=True)
class UserDrop:
    """User positions (polar, metres/radians), shadowing and gains beta_k."""

    radii: np.ndarray
    angles: np.ndarray
    shadow: np.ndarray
    beta: np.ndarray

    @property
    def K(self) -> int:
        return len(self.beta)


@dataclass(frozen=True)
class CorrelationSet:
    """Per-user spatial covariances ``R[k]`` and Hermitian roots ``sqrtR[k]``.

    ``R`` and ``sqrtR`` have shape (K, M, M).
    """

    R: np.ndarray
    sqrtR: np.ndarray
    beta: np.ndarray
    _sqrt_diag: object = field(default=_UNSET, repr=False, compare=False)

    @property
    def K(self) -> int:
        return self.R.shape[0]

    @property
    def M(self) -> int:
        return self.R.shape[1]

    @property
    def is_scaled_identity(self) -> bool:
        d = np.diagonal(self.R, axis1=1, axis2=2)
        off = self.R - d[:, :, None] * np.eye(self.M)
        return bool(not np.any(off) and np.all(d == d[:, :1]))

    @property
    def sqrt_diagonal(self) -> np.ndarray | None:
        """Diagonals of ``sqrtR`` when all of them are diagonal, else None."""
        if self._sqrt_diag is _UNSET:
            object.__setattr__(self, "_sqrt_diag", diagonal_if_diagonal(self.sqrtR))
        return self._sqrt_diag

    @classmethod
    def from_matrices(cls, R) -> "CorrelationSet":
        R = np.asarray(R, dtype=complex)
        if R.ndim == 2:
            R = R[None]
        roots = np.stack([hermitian_sqrt(r) for r in R])
        beta = np.real(np.trace(R, axis1=1, axis2=2)) / R.shape[1]
        return cls(R=R, sqrtR=roots, beta=beta)


def large_scale_gain(radius, shadow, cfg: SystemConfig):
    """beta = z / (r / r_0)^upsilon."""
    return np.asarray(shadow) / (np.asarray(radius) / cfg.guard_radius) ** cfg.path_loss_exp


def drop_users(cfg: SystemConfig, stream: RandomSource) -> UserDrop:
    """Drop K users uniformly (in area) on the annulus [r_0, R].

    Shadowing is lognormal with ``10 log10 z ~ N(0, shadow_std_db^2)``.
    With ``cfg.large_scale == "unit"`` every beta_k is 1 (positions are
    still drawn so the stream consumption does not depend on the model).
    """
    rng = as_generator(stream)
    r0, R = cfg.guard_radius, cfg.cell_radius
    u = rng.random(cfg.K)
    radii = np.sqrt(r0 ** 2 + u * (R ** 2 - r0 ** 2))
    angles = rng.uniform(0.0, 2 * np.pi, cfg.K)
    shadow = 10.0 ** (cfg.shadow_std_db * rng.standard_normal(cfg.K) / 10.0)
    if cfg.large_scale == "unit":
        beta = np.ones(cfg.K)
    else:
        beta = large_scale_gain(radii, shadow, cfg)
    return UserDrop(radii=radii, angles=angles, shadow=shadow, beta=beta)


def exponential_correlation(M: int, coefficient: float) -> np.ndarray:
    if not 0.0 <= coefficient < 1.0:
        raise ValueError("singular correlation: coefficient must lie in [0, 1)")
    idx = np.arange(M)
    return coefficient ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def build_correlation(cfg: SystemConfig, drop: UserDrop) -> CorrelationSet:
    """R_k = beta_k I, or beta_k C with C[i, j] = c^|i-j| when c > 0."""
    beta = np.asarray(drop.beta, dtype=float)
    if beta.shape != (cfg.K,):
        raise ValueError(f"drop has {beta.shape} users, config expects K={cfg.K}")
    c = cfg.antenna_correlation
    if c == 0.0:
        eye = np.eye(cfg.M, dtype=complex)
        R = beta[:, None, None] * eye
        roots = np.sqrt(beta)[:, None, None] * eye
        return CorrelationSet(R=R, sqrtR=roots, beta=beta)
    C = exponential_correlation(cfg.M, c)
    w, v = np.linalg.eigh(C)
    root_c = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    R = beta[:, None, None] * C.astype(complex)
    roots = np.sqrt(beta)[:, None, None] * root_c.astype(complex)
    return CorrelationSet(R=R, sqrtR=roots, beta=beta)


def unit_correlation(cfg: SystemConfig) -> CorrelationSet:
    """R_k = I for every user (beta_k = 1)."""
    return build_correlation(cfg, UserDrop(radii=np.full(cfg.K, cfg.guard_radius),
                                           angles=np.zeros(cfg.K),
                                           shadow=np.ones(cfg.K),
                                           beta=np.ones(cfg.K)))
