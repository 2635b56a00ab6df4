"""
Numerical building blocks: reproducible random streams, circularly
symmetric Gaussian sampling, Bessel J0 and a few unit conversions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

# Series/asymptotic switch point for J0. The Hankel expansion's smallest
# term is ~exp(-2x), so it only reaches 1e-10 beyond x ~ 12.
_J0_SERIES_LIMIT = 14.0
_J0_SERIES_TERMS = 60
_J0_ASYMPTOTIC_TERMS = 30


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of an independent random stream.

    The generator for a stream is a Philox counter-based bit generator
    seeded from ``SeedSequence(root_seed, spawn_key=path)``, so the samples
    only depend on ``(root_seed, path)`` and never on scheduling order.
    """

    root_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))
        if self.root_seed < 0 or any(p < 0 for p in self.path):
            raise ValueError("seeds and stream path entries must be >= 0")

    def child(self, *indices: int) -> "RngStream":
        return RngStream(self.root_seed, self.path + tuple(indices))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.root_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


RandomSource = Union[RngStream, np.random.Generator]


def as_generator(source: RandomSource) -> np.random.Generator:
    if isinstance(source, np.random.Generator):
        return source
    if isinstance(source, RngStream):
        return source.generator()
    raise TypeError(f"expected RngStream or numpy Generator, got {type(source)!r}")


# xxxxxxxxxxxxxxx Matrix helpers xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def hermitian(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(np.conj(x), -1, -2)


def is_hermitian(x: np.ndarray, rtol: float = 1e-12) -> bool:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        return False
    scale = np.max(np.abs(x)) if x.size else 0.0
    if scale == 0.0:
        return True
    return bool(np.max(np.abs(x - hermitian(x))) <= rtol * scale)


def psd_factor(cov: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Return L with L L^H = cov for a Hermitian positive semi-definite cov.

    Eigen-decomposition is used instead of Cholesky so that singular
    (e.g. zero or rank-deficient) covariances are accepted.
    """
    cov = np.asarray(cov, dtype=complex)
    if not is_hermitian(cov):
        raise ValueError("invalid covariance: not Hermitian")
    cov = 0.5 * (cov + hermitian(cov))
    w, v = np.linalg.eigh(cov)
    top = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    if w.size and w[0] < -rtol * max(top, 1e-300):
        raise ValueError("invalid covariance: not positive semi-definite")
    return v * np.sqrt(np.clip(w, 0.0, None))


def hermitian_sqrt(x: np.ndarray) -> np.ndarray:
    """Hermitian square root S with S S = x (x Hermitian PSD)."""
    x = np.asarray(x, dtype=complex)
    if not is_hermitian(x):
        raise ValueError("invalid covariance: not Hermitian")
    w, v = np.linalg.eigh(0.5 * (x + hermitian(x)))
    if w.size and w[0] < -1e-10 * max(float(np.max(np.abs(w))), 1e-300):
        raise ValueError("invalid covariance: not positive semi-definite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ hermitian(v)


def solve_hpd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a X = b for Hermitian positive-definite a (Cholesky based)."""
    c = np.linalg.cholesky(a)
    y = np.linalg.solve(c, b)
    return np.linalg.solve(hermitian(c), y)


def diagonal_if_diagonal(mats: np.ndarray) -> np.ndarray | None:
    """Diagonals (K, M) of a stack (K, M, M) when every matrix is diagonal, else None."""
    mats = np.asarray(mats)
    d = np.diagonal(mats, axis1=-2, axis2=-1)
    off = mats.copy()
    idx = np.arange(mats.shape[-1])
    off[..., idx, idx] = 0
    return None if np.any(off) else d.copy()


def apply_per_user(mats: np.ndarray, x: np.ndarray, diag: np.ndarray | None = None) -> np.ndarray:
    """y[..., k, :] = mats[k] @ x[..., k, :] for a stack mats (K, M, M).

    ``diag`` (K, M) short-cuts the product when every matrix is diagonal.
    """
    x = np.asarray(x)
    if diag is not None:
        return diag * x
    out = np.empty(np.broadcast_shapes(x.shape, x.shape[:-1] + (mats.shape[-2],)),
                   dtype=np.result_type(mats, x))
    for k in range(mats.shape[0]):
        out[..., k, :] = x[..., k, :] @ mats[k].T
    return out


# xxxxxxxxxxxxxxx Sampling xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def standard_circular(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries (real and imaginary variance 1/2 each)."""
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    z *= math.sqrt(0.5)
    return z.view(np.complex128)[..., 0]


def sample_circular_gaussian(source: RandomSource, covariance: np.ndarray,
                             size: int | Sequence[int] | None = None) -> np.ndarray:
    """Draw CN(0, covariance) vectors.

    Parameters
    ----------
    source : RngStream or numpy Generator
    covariance : (n, n) Hermitian PSD array
    size : number (or shape) of independent draws. ``None`` returns a
        single length-n vector; otherwise the result has shape
        ``(*size, n)``.

    Raises
    ------
    ValueError
        "invalid covariance" for non-Hermitian or indefinite input.
    """
    covariance = np.atleast_2d(np.asarray(covariance, dtype=complex))
    n = covariance.shape[0]
    if covariance.shape != (n, n):
        raise ValueError("invalid covariance: not square")
    factor = psd_factor(covariance)
    rng = as_generator(source)
    lead = () if size is None else tuple(np.atleast_1d(size))
    u = standard_circular(rng, lead + (n,))
    return u @ factor.T


# xxxxxxxxxxxxxxx Special functions xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _j0_series(x: np.ndarray) -> np.ndarray:
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    comp = np.zeros_like(x)
    for m in range(1, _J0_SERIES_TERMS):
        term = term * q / (m * m)
        # Kahan-compensated accumulation
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _j0_asymptotic(x: np.ndarray) -> np.ndarray:
    # Hankel expansion J0 = sqrt(2/(pi x)) (P cos(x - pi/4) - Q sin(x - pi/4)),
    # truncated per element at the smallest term.
    p = np.ones_like(x)
    q = np.zeros_like(x)
    t = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    eight_x = 8.0 * x
    for k in range(1, 2 * _J0_ASYMPTOTIC_TERMS):
        ratio = (2 * k - 1) ** 2 / (k * eight_x)
        active &= ratio < 1.0
        if not np.any(active):
            break
        t = np.where(active, t * ratio, 0.0)
        if k % 2:
            q += (-1) ** ((k + 1) // 2) * t
        else:
            p += (-1) ** (k // 2) * t
    chi = x - math.pi / 4.0
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j0(x):
    """Bessel function of the first kind, order zero.

    Power series for |x| <= 14 and the Hankel asymptotic expansion beyond;
    absolute error below 1e-10 on |x| <= 50. Accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j0 requires finite input")
    ax = np.abs(arr)
    out = np.empty_like(ax)
    small = ax <= _J0_SERIES_LIMIT
    if np.any(small):
        out[small] = _j0_series(ax[small])
    if np.any(~small):
        out[~small] = _j0_asymptotic(ax[~small])
    if out.ndim == 0:
        return float(out)
    return out


def j0_first_zero() -> float:
    return 2.404825557695773


# xxxxxxxxxxxxxxx Unit conversions xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def deg_to_rad_variance(sigma_deg):
    """Increment std in degrees -> increment variance in rad^2."""
    s = np.asarray(sigma_deg, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("phase standard deviation must be finite and >= 0")
    out = np.deg2rad(s) ** 2
    return float(out) if out.ndim == 0 else out


def phase_increment_variance(f_c: float, c_osc: float, T_s: float) -> float:
    """Wiener increment variance 4 pi^2 f_c c T_s of a free-running oscillator."""
    if min(f_c, c_osc, T_s) < 0:
        raise ValueError("carrier, oscillator constant and symbol time must be >= 0")
    return 4.0 * math.pi ** 2 * f_c * c_osc * T_s


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))
