"""Named experiments: sweeps over M and Doppler, power searches and power scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .det_equiv import (de_rate, de_sinr, de_terms, diagonal_filters, power_scaling_limit,
                        power_scaling_limit_tau_squared)
from .downlink import SinrReport, hardening_sinr_mc
from .numerics import RngStream
from .scenario import UserDrop, build_correlation, drop_users

KINDS = ("sweepM", "sweepDoppler", "powerForTargetRate", "powerScaling")
DEFAULT_CASES = ((0.0, 0.0), (0.0, 2.0), (2.0, 2.0))
REFERENCE_CASE = "ref_no_aging"

# stream-path tags
_TAG_DROP = 0
_TAG_MC = 1

PD_BRACKET = (1e-6, 1e6)
RATE_TOL = 1e-4
MAX_BISECTIONS = 60
SLOPE_THRESHOLD = 0.1


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment.

    ``grid`` holds M values, except for ``sweepDoppler`` where it holds the
    normalised Doppler f_D T_s. ``phase_cases`` are (BS, user) phase
    increment standard deviations in degrees.
    """

    kind: str
    grid: tuple
    base: SystemConfig = field(default_factory=SystemConfig)
    trials: int = 1000
    root_seed: int = 0
    phase_cases: tuple = DEFAULT_CASES
    target_rate: float = 1.0
    q_values: tuple = (0.4, 0.5, 0.6)
    E_u: float = 0.25
    E_d: float = 0.25
    threads: int = 1
    name: str | None = None
    monte_carlo: bool = True

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "phase_cases",
                           tuple((float(a), float(b)) for a, b in self.phase_cases))
        object.__setattr__(self, "q_values", tuple(float(q) for q in self.q_values))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.grid:
            raise ValueError("grid must not be empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.kind != "sweepDoppler" and any(g != int(g) or g < 1 for g in self.grid):
            raise ValueError("grid values must be positive antenna counts")
        if self.kind == "sweepDoppler" and self.grid[0] < 0:
            raise ValueError("normalised Doppler must be >= 0")
        if self.monte_carlo and self.kind in ("sweepM", "sweepDoppler") and self.trials < 2:
            raise ValueError("trials must be >= 2")
        if self.kind == "powerScaling" and any(q <= 0 for q in self.q_values):
            raise ValueError("power-scaling exponent q must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def replace(self, **changes) -> "ExperimentSpec":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return ExperimentSpec(**values)


@dataclass(frozen=True)
class ResultRow:
    """One output line. ``user`` is None for the per-case sum row."""

    sweep: float
    case: str
    source: str
    user: int | None
    rate: float
    sum_se: float
    ci_halfwidth: float

    def sort_key(self):
        return (self.sweep, self.case, self.source, -1 if self.user is None else self.user)


@dataclass
class ResultTable:
    """Rows sorted by (sweep, case, source, user) plus named companion tables."""

    kind: str
    rows: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def sort(self) -> "ResultTable":
        self.rows.sort(key=ResultRow.sort_key)
        return self

    def select(self, case=None, source=None, user="sum"):
        """Rows filtered by case/source; ``user="sum"`` keeps the sum rows."""
        out = []
        for r in self.rows:
            if case is not None and r.case != case:
                continue
            if source is not None and r.source != source:
                continue
            if user == "sum" and r.user is not None:
                continue
            if user not in ("sum", "all") and r.user != user:
                continue
            out.append(r)
        return out

    def sum_se(self, case: str, source: str = "DE") -> np.ndarray:
        """Sum spectral efficiency along the sweep for one case."""
        return np.array([r.sum_se for r in self.select(case=case, source=source)])


def case_label(bs_deg: float, user_deg: float) -> str:
    return f"phi{bs_deg:g}_varphi{user_deg:g}"


def _report_rows(report: SinrReport, sweep: float, case: str, source: str) -> list:
    rows = []
    ci = report.rate_ci if report.rate_ci is not None else np.zeros(len(report.rate))
    for k, rate in enumerate(report.rate):
        rows.append(ResultRow(sweep, case, source, k, float(rate), report.sum_se, float(ci[k])))
    rows.append(ResultRow(sweep, case, source, None, report.sum_se, report.sum_se,
                          float(report.sum_se_ci)))
    return rows


def experiment_drop(spec: ExperimentSpec) -> UserDrop:
    """The single user drop shared by every grid point of an experiment."""
    return drop_users(spec.base, RngStream(spec.root_seed, (_TAG_DROP,)))


def _doppler_key(cfg: SystemConfig) -> int:
    return int(round(cfg.normalized_doppler * 1e9))


def _evaluate(spec: ExperimentSpec, cfg: SystemConfig, drop: UserDrop, sweep: float,
              case: str, case_index: int) -> list:
    corr = build_correlation(cfg, drop)
    rows = _report_rows(de_rate(cfg, corr), sweep, case, "DE")
    if spec.monte_carlo:
        # keyed by values, so identical configurations in different sweeps share streams
        path = (_TAG_MC, case_index, cfg.M, _doppler_key(cfg))
        mc = hardening_sinr_mc(cfg, corr, spec.trials, root_seed=spec.root_seed,
                               stream_path=path, threads=spec.threads)
        rows += _report_rows(mc, sweep, case, "MC")
    return rows


def _with_case(cfg: SystemConfig, case, **changes) -> SystemConfig:
    # one replace call, so a per-antenna list never meets a changed M
    return cfg.replace(sigma_phi_deg=case[0], sigma_varphi_deg=case[1], **changes)


# xxxxxxxxxxxxxxx Sweeps xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def run_sweep_m(spec: ExperimentSpec) -> ResultTable:
    """Monte-Carlo and closed-form sum SE versus M in a static channel."""
    if spec.kind != "sweepM":
        raise ValueError("run_sweep_m needs kind = sweepM")
    drop = experiment_drop(spec)
    table = ResultTable(kind=spec.kind)
    for ci, case in enumerate(spec.phase_cases):
        for M in spec.grid:
            cfg = _with_case(spec.base, case, M=int(M), f_D=0.0)
            table.rows += _evaluate(spec, cfg, drop, M, case_label(*case), ci)
    return table.sort()


def run_sweep_doppler(spec: ExperimentSpec) -> ResultTable:
    """Sum SE versus f_D T_s at fixed M, plus the no-aging reference line."""
    if spec.kind != "sweepDoppler":
        raise ValueError("run_sweep_doppler needs kind = sweepDoppler")
    drop = experiment_drop(spec)
    base = spec.base
    table = ResultTable(kind=spec.kind)
    for ci, case in enumerate(spec.phase_cases):
        for x in spec.grid:
            cfg = _with_case(base, case, f_D=x / base.T_s)
            table.rows += _evaluate(spec, cfg, drop, x, case_label(*case), ci)
    # imperfect CSI without aging: A_n = I and a static channel for every data symbol
    ref_cfg = base.replace(f_D=0.0, sigma_phi_deg=0.0, sigma_varphi_deg=0.0)
    ref_rows = _evaluate(spec, ref_cfg, drop, 0.0, REFERENCE_CASE, len(spec.phase_cases))
    for x in spec.grid:
        table.rows += [ResultRow(x, r.case, r.source, r.user, r.rate, r.sum_se, r.ci_halfwidth)
                       for r in ref_rows]
    return table.sort()


# xxxxxxxxxxxxxxx Power search xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
@dataclass(frozen=True)
class PowerSearch:
    p_d: float
    rate: float
    iterations: int
    report: SinrReport


def required_power(cfg: SystemConfig, corr, target_rate: float) -> PowerSearch:
    """Smallest p_d whose worst-user closed-form rate meets ``target_rate``.

    Log-domain bisection over [1e-6, 1e6]; stops once the rate is within
    1e-4 bits/s/Hz of the target.
    """
    lo, hi = PD_BRACKET

    def evaluate(p):
        rep = de_rate(cfg.replace(p_d=p), corr)
        return float(np.min(rep.rate)), rep

    r_lo, rep_lo = evaluate(lo)
    if r_lo >= target_rate:
        return PowerSearch(lo, r_lo, 0, rep_lo)
    r_hi, rep_hi = evaluate(hi)
    if r_hi < target_rate - RATE_TOL:
        raise ValueError("target rate infeasible within the power bracket")
    if abs(r_hi - target_rate) <= RATE_TOL:
        return PowerSearch(hi, r_hi, 0, rep_hi)
    a, b = math.log(lo), math.log(hi)
    for it in range(1, MAX_BISECTIONS + 1):
        mid = 0.5 * (a + b)
        r, rep = evaluate(math.exp(mid))
        if abs(r - target_rate) <= RATE_TOL:
            return PowerSearch(math.exp(mid), r, it, rep)
        if r < target_rate:
            a = mid
        else:
            b = mid
    raise ValueError("bisection did not reach the rate tolerance")


def find_power_for_rate(spec: ExperimentSpec, target_rate: float | None = None) -> ResultTable:
    """Downlink power needed for a per-user target rate, for every M and case.

    The companion table ``extras["power"]`` lists (M, case, p_d, p_d in dB).
    """
    if spec.kind != "powerForTargetRate":
        raise ValueError("find_power_for_rate needs kind = powerForTargetRate")
    target = spec.target_rate if target_rate is None else target_rate
    drop = experiment_drop(spec)
    table = ResultTable(kind=spec.kind)
    power = []
    for case in spec.phase_cases:
        for M in spec.grid:
            cfg = _with_case(spec.base, case, M=int(M))
            corr = build_correlation(cfg, drop)
            found = required_power(cfg, corr, target)
            label = case_label(*case)
            table.rows += _report_rows(found.report, M, label, "DE")
            power.append({"sweep": M, "case": label, "required_pd": found.p_d,
                          "required_pd_db": 10.0 * math.log10(found.p_d),
                          "achieved_rate": found.rate, "iterations": found.iterations})
    power.sort(key=lambda r: (r["sweep"], r["case"]))
    table.extras["power"] = power
    return table.sort()


# xxxxxxxxxxxxxxx Power scaling xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def classify_trend(M_values, gamma_values, threshold: float = SLOPE_THRESHOLD) -> tuple[str, float]:
    """Classify an SINR sequence from the log-log slope of its last two points.

    Returns ("growing" | "converging" | "vanishing", slope). A growing SINR
    is the unbounded case.
    """
    m1, m2 = M_values[-2], M_values[-1]
    g1, g2 = gamma_values[-2], gamma_values[-1]
    slope = math.log(g2 / g1) / math.log(m2 / m1)
    if slope > threshold:
        return "growing", slope
    if slope < -threshold:
        return "vanishing", slope
    return "converging", slope


def scaled_config(base: SystemConfig, M: int, q: float, E_u: float, E_d: float) -> SystemConfig:
    """Configuration with p_u = E_u / M^q and p_d = E_d / M^q."""
    return base.replace(M=int(M), p_u=E_u / M ** q, p_d=E_d / M ** q, tie_uplink_power=False)


def scaling_sinr(cfg: SystemConfig, beta, n: int) -> np.ndarray:
    """Closed-form SINR of every user at lag ``n`` for R_k = beta_k I."""
    r = np.repeat(np.asarray(beta, dtype=float)[:, None], cfg.M, axis=1)
    terms = de_terms(cfg, r, diagonal_filters(cfg, r), n)
    return np.array([de_sinr(terms, cfg, k) for k in range(cfg.K)])


def verify_power_scaling(spec: ExperimentSpec, q_values=None, lag: int | None = None) -> ResultTable:
    """Closed-form SINR under p_u, p_d ~ 1/M^q for each q, classified by trend.

    Needs R_k = beta_k I (no antenna correlation). ``lag`` defaults to the
    first data symbol. The companion table ``extras["scaling"]`` holds one
    row per (q, M) with the mean SINR over users, and ``extras["classes"]``
    one row per q with its trend class, slope and, at q = 1/2, the large-M
    limit and its relative deviation at the largest M.
    """
    if spec.kind != "powerScaling":
        raise ValueError("verify_power_scaling needs kind = powerScaling")
    if spec.base.antenna_correlation != 0.0:
        raise ValueError("power scaling needs R_k = beta_k I")
    qs = spec.q_values if q_values is None else tuple(float(q) for q in q_values)
    drop = experiment_drop(spec)
    base = spec.base if not spec.phase_cases else _with_case(spec.base, spec.phase_cases[0])
    n = base.tau + 1 if lag is None else int(lag)
    table = ResultTable(kind=spec.kind)
    scaling, classes = [], []
    for q in qs:
        gammas = []
        for M in spec.grid:
            cfg = scaled_config(base, M, q, spec.E_u, spec.E_d)
            gamma = scaling_sinr(cfg, drop.beta, n)
            gammas.append(float(np.mean(gamma)))
            scaling.append({"q": q, "sweep": M, "gamma": gammas[-1]})
            r = np.repeat(np.asarray(drop.beta, dtype=float)[:, None], cfg.M, axis=1)
            report = de_rate(cfg, r, diagonal_filters(cfg, r))
            table.rows += _report_rows(report, M, f"q{q:g}", "DE")
        if len(gammas) >= 2:
            label, slope = classify_trend(spec.grid, gammas)
        else:
            label, slope = "undetermined", float("nan")
        entry = {"q": q, "class": label, "slope": slope}
        if q == 0.5:
            cfg = scaled_config(base, spec.grid[-1], q, spec.E_u, spec.E_d)
            limits = [power_scaling_limit(cfg, k, n, spec.E_u, spec.E_d, R=np.full(1, b))
                      for k, b in enumerate(drop.beta)]
            limit = float(np.mean(limits))
            entry["limit"] = limit
            entry["limit_tau_squared"] = float(np.mean(
                [power_scaling_limit_tau_squared(cfg, k, n, spec.E_u, spec.E_d, R=np.full(1, b))
                 for k, b in enumerate(drop.beta)]))
            entry["relative_gap"] = abs(gammas[-1] - limit) / limit
        classes.append(entry)
    table.extras["scaling"] = scaling
    table.extras["classes"] = classes
    return table.sort()


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    runners = {"sweepM": run_sweep_m, "sweepDoppler": run_sweep_doppler,
               "powerForTargetRate": find_power_for_rate, "powerScaling": verify_power_scaling}
    return runners[spec.kind](spec)
