"""System configuration and the flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .numerics import deg_to_rad_variance

TOPOLOGIES = ("CLO", "ILO", "SLO")
AGING_PATHS = ("directJakesLag", "recursiveAR1")
LARGE_SCALE_MODELS = ("drop", "unit")


class ConfigError(ValueError):
    """Invalid configuration. ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _f(default, unit, doc, **kw):
    return field(default=default, metadata={"unit": unit, "doc": doc}, **kw)


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one single-cell downlink scenario.

    Phase-noise magnitudes are per-symbol Wiener increment standard
    deviations in degrees; :attr:`bs_phase_var` and
    :attr:`user_phase_var` give the radian-squared variances used by the
    math.
    """

    M: int = _f(64, "antennas", "number of BS antennas")
    K: int = _f(8, "users", "number of single-antenna users")
    tau: int | None = _f(None, "symbols", "pilot length (default: K)")
    T_c: int = _f(500, "symbols", "coherence block length")
    p_u: float = _f(100.0, "linear", "uplink power per user")
    p_d: float = _f(100.0, "linear", "downlink power per user")
    sigma_b2: float = _f(1.0, "linear", "BS receiver noise variance")
    sigma_k2: float = _f(1.0, "linear", "user receiver noise variance")
    f_D: float = _f(0.0, "Hz", "Doppler spread")
    T_s: float = _f(2.5e-8, "s", "symbol time")
    f_c: float = _f(2e9, "Hz", "carrier frequency")
    lo_topology: str = _f("CLO", "CLO|ILO|SLO", "BS oscillator topology")
    sigma_phi_deg: Any = _f(0.0, "deg", "BS phase increment std (scalar, or M values for SLO)")
    sigma_varphi_deg: Any = _f(0.0, "deg", "user phase increment std (scalar or K values)")
    cell_radius: float = _f(1000.0, "m", "cell radius")
    guard_radius: float = _f(100.0, "m", "minimum user distance")
    shadow_std_db: float = _f(8.0, "dB", "lognormal shadowing std")
    path_loss_exp: float = _f(3.8, "-", "path-loss exponent")
    antenna_correlation: float = _f(0.0, "[0,1)", "exponential antenna correlation coefficient")
    large_scale: str = _f("drop", "drop|unit", "random user drop, or beta_k = 1 for all users")
    aging_path: str = _f("directJakesLag", "directJakesLag|recursiveAR1", "channel evolution model")
    tie_uplink_power: bool = _f(False, "bool", "set p_u = p_d (power searches)")
    mc_lag_points: int = _f(16, "count", "data symbols evaluated by Monte-Carlo, 0 = all (rates interpolate)")

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", self.K)
        for name in ("sigma_phi_deg", "sigma_varphi_deg"):
            v = getattr(self, name)
            if isinstance(v, (list, tuple, np.ndarray)):
                v = tuple(float(x) for x in v)
                if len(v) == 1:
                    v = v[0]
            else:
                v = float(v)
            object.__setattr__(self, name, v)
        self.validate()

    # xxxxxxxxxx validation xxxxxxxxxx
    def validate(self) -> None:
        if self.M < 1:
            raise ConfigError("M", "must be >= 1")
        if self.K < 1:
            raise ConfigError("K", "must be >= 1")
        if not self.K <= self.tau:
            raise ConfigError("tau", "must satisfy K <= tau")
        if not self.tau <= self.T_c:
            raise ConfigError("T_c", "must satisfy tau <= T_c")
        for key in ("p_u", "p_d", "sigma_b2", "sigma_k2", "T_s", "f_c",
                    "cell_radius", "guard_radius"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be strictly positive")
        for key in ("f_D", "shadow_std_db", "path_loss_exp"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be >= 0")
        if not self.guard_radius < self.cell_radius:
            raise ConfigError("guard_radius", "must be smaller than cell_radius")
        if not 0.0 <= self.antenna_correlation < 1.0:
            raise ConfigError("antenna_correlation", "singular correlation (need 0 <= c < 1)")
        if self.lo_topology not in TOPOLOGIES:
            raise ConfigError("lo_topology", f"must be one of {TOPOLOGIES}")
        if self.aging_path not in AGING_PATHS:
            raise ConfigError("aging_path", f"must be one of {AGING_PATHS}")
        if self.large_scale not in LARGE_SCALE_MODELS:
            raise ConfigError("large_scale", f"must be one of {LARGE_SCALE_MODELS}")
        if self.mc_lag_points < 2 and self.mc_lag_points != 0:
            raise ConfigError("mc_lag_points", "must be 0 (every symbol) or >= 2")
        phi = self.sigma_phi_deg
        if isinstance(phi, tuple):
            if self.lo_topology != "SLO":
                raise ConfigError("sigma_phi_deg", "a per-antenna list requires lo_topology = SLO")
            if len(phi) != self.M:
                raise ConfigError("sigma_phi_deg", f"expected {self.M} values (one per antenna), got {len(phi)}")
        varphi = self.sigma_varphi_deg
        if isinstance(varphi, tuple) and len(varphi) != self.K:
            raise ConfigError("sigma_varphi_deg", f"expected {self.K} values (one per user), got {len(varphi)}")
        for key in ("sigma_phi_deg", "sigma_varphi_deg"):
            if np.any(np.asarray(getattr(self, key)) < 0):
                raise ConfigError(key, "must be >= 0")

    # xxxxxxxxxx derived quantities xxxxxxxxxx
    @property
    def p_p(self) -> float:
        """Pilot power tau * p_u."""
        return self.tau * self.uplink_power

    @property
    def uplink_power(self) -> float:
        return self.p_d if self.tie_uplink_power else self.p_u

    @property
    def normalized_doppler(self) -> float:
        return self.f_D * self.T_s

    @property
    def bs_phase_var(self) -> np.ndarray:
        """Per-antenna increment variances (rad^2), length M."""
        return np.broadcast_to(deg_to_rad_variance(self.sigma_phi_deg), (self.M,)).astype(float)

    @property
    def user_phase_var(self) -> np.ndarray:
        """Per-user increment variances (rad^2), length K."""
        return np.broadcast_to(deg_to_rad_variance(self.sigma_varphi_deg), (self.K,)).astype(float)

    @property
    def homogeneous_bs_phase(self) -> bool:
        v = self.bs_phase_var
        return bool(np.all(v == v[0]))

    @property
    def data_lags(self) -> np.ndarray:
        """Symbol times tau+1 .. T_c at which downlink data is sent."""
        return np.arange(self.tau + 1, self.T_c + 1)

    def replace(self, **changes) -> "SystemConfig":
        if "K" in changes and "tau" not in changes and self.tau == self.K:
            changes["tau"] = None
        return dataclasses.replace(self, **changes)

    def to_items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in dataclasses.fields(self)]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}


def canonical_key(key: str, known) -> str | None:
    """Case-insensitive lookup of a key among ``known`` names."""
    lowered = {k.lower(): k for k in known}
    return lowered.get(key.strip().lower())


def _parse_bool(key, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def parse_field(key: str, text: str):
    """Convert the text of a SystemConfig key to its typed value."""
    text = text.strip()
    try:
        if key in ("M", "K", "T_c", "mc_lag_points"):
            return int(text)
        if key == "tau":
            return None if text.lower() in ("", "auto") else int(text)
        if key in ("lo_topology", "large_scale", "aging_path"):
            return text
        if key == "tie_uplink_power":
            return _parse_bool(key, text)
        if key in ("sigma_phi_deg", "sigma_varphi_deg"):
            parts = [p for p in text.split(",") if p.strip()]
            vals = tuple(float(p) for p in parts)
            return vals[0] if len(vals) == 1 else vals
        return float(text)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(key, f"type mismatch: cannot parse {text!r}") from None


def read_key_values(path: str | Path) -> list[tuple[str, str, int]]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
            key, value = line.split("=", 1)
            out.append((key.strip(), value.strip(), lineno))
    return out


def load_system_config(path: str | Path) -> SystemConfig:
    """Load a file containing SystemConfig keys only."""
    values = {}
    for key, value, _ in read_key_values(path):
        name = canonical_key(key, CONFIG_FIELDS)
        if name is None:
            raise ConfigError(key, "unknown configuration key")
        values[name] = parse_field(name, value)
    return build_config(values)


def build_config(values: dict) -> SystemConfig:
    try:
        return SystemConfig(**values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
