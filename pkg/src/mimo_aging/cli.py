"""Command-line front end.

Subcommands::

    run --config FILE        run the experiment described by a config file
    preset NAME              run a named experiment (fig1, fig2, fig3, scaling)
    validate --config FILE   check a config file and print the resolved keys
    j0-table                 dump J0 on a grid (debugging aid)

Config files are flat ``key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import (CONFIG_FIELDS, ConfigError, SystemConfig, canonical_key, format_value,
                     parse_field, read_key_values)
from .experiments import KINDS, ExperimentSpec, ResultTable, run_experiment
from .numerics import bessel_j0

CSV_HEADER = "sweep,case,source,user,rate,sum_se,ci_halfwidth"
MIN_PUBLISHED_TRIALS = 100

# experiment-level keys: (unit, default, doc)
EXPERIMENT_KEYS = {
    "preset": ("fig1|fig2|fig3|scaling", "none", "start from a named experiment"),
    "experiment": ("|".join(KINDS), "none", "experiment kind (required without preset)"),
    "name": ("text", "kind or preset", "output file stem"),
    "grid": ("list", "none", "sweep values: M, or f_D*T_s for sweepDoppler (required without preset)"),
    "trials": ("count", "1000", "Monte-Carlo realisations per point"),
    "seed": ("u64", "0", "root seed of every random stream"),
    "threads": ("count", "1", "worker threads (never changes results)"),
    "phase_cases": ("deg:deg list", "0:0,0:2,2:2", "BS:user phase-noise std pairs"),
    "target_rate": ("bit/s/Hz", "1", "per-user target of powerForTargetRate"),
    "q_values": ("list", "0.4,0.5,0.6", "power-scaling exponents"),
    "E_u": ("linear", "0.25", "uplink energy for power scaling"),
    "E_d": ("linear", "0.25", "downlink energy for power scaling"),
    "monte_carlo": ("bool", "true", "also run Monte-Carlo next to the closed form"),
}

_DESK_BASE = dict(M=64, K=8, T_c=500, p_u=1e4, p_d=1e4, large_scale="drop")
FULL_M_GRID = (30, 60, 90, 120, 150, 180, 210, 240, 270, 300)
FULL_T_C = 40000
DOPPLER_GRID = (0.0, 0.0025, 0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)


def preset(name: str, full_scale: bool = False) -> ExperimentSpec:
    """Named desk-scale experiment, with the three phase-noise cases.

    ``full_scale`` switches the static experiments to M in 30..300 and
    T_c = 40000 symbols.
    """
    if name == "fig1":
        base = SystemConfig(**_DESK_BASE).replace(f_D=0.0)
        grid = (16, 32, 64, 128)
        if full_scale:
            base, grid = base.replace(T_c=FULL_T_C), FULL_M_GRID
        return ExperimentSpec("sweepM", grid, base, trials=1000, name="fig1")
    if name == "fig2":
        base = SystemConfig(**_DESK_BASE).replace(M=60)
        return ExperimentSpec("sweepDoppler", DOPPLER_GRID, base, trials=200, name="fig2")
    if name == "fig3":
        base = SystemConfig(M=64, K=1, T_c=500, f_D=0.0, large_scale="unit",
                            tie_uplink_power=True)
        grid = (16, 32, 64, 128)
        if full_scale:
            base, grid = base.replace(T_c=FULL_T_C), FULL_M_GRID
        return ExperimentSpec("powerForTargetRate", grid, base, target_rate=1.0,
                              monte_carlo=False, name="fig3")
    if name == "scaling":
        base = SystemConfig(M=64, K=8, T_c=500, large_scale="unit")
        return ExperimentSpec("powerScaling", (64, 256, 1024, 4096), base,
                              phase_cases=((0.0, 0.0),), monte_carlo=False, name="scaling")
    raise ConfigError("preset", f"unknown preset {name!r} (expected fig1, fig2, fig3, scaling)")


PRESETS = ("fig1", "fig2", "fig3", "scaling")


# xxxxxxxxxxxxxxx Config parsing xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _parse_list(key, text, conv=float):
    try:
        return tuple(conv(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(key, f"type mismatch: cannot parse {text!r}") from None


def _parse_cases(text):
    cases = []
    for part in text.split(","):
        if not part.strip():
            continue
        bits = part.split(":")
        if len(bits) != 2:
            raise ConfigError("phase_cases", f"expected BS:user pairs, got {part.strip()!r}")
        try:
            cases.append((float(bits[0]), float(bits[1])))
        except ValueError:
            raise ConfigError("phase_cases", f"type mismatch: cannot parse {part.strip()!r}") from None
    return tuple(cases)


def _parse_experiment_key(key, text):
    text = text.strip()
    try:
        if key in ("preset", "experiment", "name"):
            return text
        if key in ("trials", "seed", "threads"):
            value = int(text)
            if value < 0:
                raise ConfigError(key, "must be >= 0")
            return value
        if key in ("target_rate", "E_u", "E_d"):
            return float(text)
        if key == "monte_carlo":
            return parse_field("tie_uplink_power", text)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise ConfigError(key, str(exc).split(": ", 1)[-1]) from None
        raise ConfigError(key, f"type mismatch: cannot parse {text!r}") from None
    if key == "grid":
        return _parse_list(key, text)
    if key == "q_values":
        return _parse_list(key, text)
    if key == "phase_cases":
        return _parse_cases(text)
    raise ConfigError(key, "unknown configuration key")


def read_config(path) -> tuple[dict, dict]:
    """Typed (system, experiment) key dictionaries from a config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    system, experiment = {}, {}
    for key, value, lineno in read_key_values(path):
        name = canonical_key(key, CONFIG_FIELDS)
        if name is not None:
            system[name] = parse_field(name, value)
            continue
        name = canonical_key(key, EXPERIMENT_KEYS)
        if name is None:
            raise ConfigError(key, f"unknown configuration key (line {lineno})")
        experiment[name] = _parse_experiment_key(name, value)
    return system, experiment


def resolve(system: dict, experiment: dict, flags: argparse.Namespace | None = None,
            preset_name: str | None = None) -> ExperimentSpec:
    """Combine preset defaults, file values and command-line flags (in that order)."""
    flags = flags or argparse.Namespace()
    experiment = dict(experiment)
    full_scale = bool(getattr(flags, "paper_scale", False))
    name = preset_name or experiment.pop("preset", None)
    if preset_name:
        experiment.pop("preset", None)
    if name:
        spec = preset(name, full_scale)
    else:
        for key in ("experiment", "grid"):
            if key not in experiment:
                raise ConfigError(key, "missing required key")
        spec = None

    base = spec.base if spec else SystemConfig()
    try:
        base = base.replace(**system) if system else base
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None

    values = {} if spec is None else {f.name: getattr(spec, f.name) for f in dataclasses.fields(spec)}
    values["base"] = base
    mapping = {"experiment": "kind", "seed": "root_seed"}
    for key, value in experiment.items():
        values[mapping.get(key, key)] = value
    for flag, field_name in (("trials", "trials"), ("seed", "root_seed"), ("threads", "threads")):
        value = getattr(flags, flag, None)
        if value is not None:
            values[field_name] = value
    try:
        return ExperimentSpec(**values)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        msg = str(exc)
        key = next((k for k in ("grid", "trials", "threads", "q_values") if k in msg), "experiment")
        raise ConfigError(key, msg) from None


def config_echo(spec: ExperimentSpec) -> list[tuple[str, str]]:
    """Every resolved key, in a form that :func:`read_config` reads back."""
    items = [(k, v) for k, v in spec.base.to_items()]
    items += [
        ("experiment", spec.kind),
        ("name", spec.label),
        ("grid", ",".join(format(g, ".17g") for g in spec.grid)),
        ("trials", str(spec.trials)),
        ("seed", str(spec.root_seed)),
        ("phase_cases", ",".join(f"{a:g}:{b:g}" for a, b in spec.phase_cases)),
        ("target_rate", repr(spec.target_rate)),
        ("q_values", ",".join(repr(q) for q in spec.q_values)),
        ("E_u", repr(spec.E_u)),
        ("E_d", repr(spec.E_d)),
        ("monte_carlo", format_value(spec.monte_carlo)),
    ]
    return [(k, "auto" if k == "tau" and v == "None" else v) for k, v in items]


# xxxxxxxxxxxxxxx Output xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _num(x) -> str:
    return format(float(x), ".12g")


def emit_csv(table: ResultTable, path) -> Path:
    """Write the main result table (UTF-8, LF, 12 significant digits)."""
    path = Path(path)
    rows = sorted(table.rows, key=lambda r: r.sort_key())
    lines = [CSV_HEADER]
    for r in rows:
        user = "sum" if r.user is None else str(r.user)
        lines.append(",".join([_num(r.sweep), r.case, "MC" if r.source == "MC" else "DE", user,
                               _num(r.rate), _num(r.sum_se), _num(r.ci_halfwidth)]))
    _write_lines(path, lines)
    return path


def emit_companion(records: list[dict], path) -> Path:
    """Write a list of homogeneous dictionaries as CSV."""
    path = Path(path)
    columns = list(records[0]) if records else []
    lines = [",".join(columns)]
    for rec in records:
        cells = []
        for c in columns:
            v = rec.get(c, "")
            cells.append(_num(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool)
                         else str(v))
        lines.append(",".join(cells))
    _write_lines(path, lines)
    return path


def _write_lines(path: Path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _companion_records(table: ResultTable):
    out = {}
    if "power" in table.extras:
        out["power"] = table.extras["power"]
    if "scaling" in table.extras:
        out["sinr"] = table.extras["scaling"]
        keys = ["q", "class", "slope", "limit", "limit_tau_squared", "relative_gap"]
        out["classes"] = [{k: rec.get(k, "") for k in keys} for rec in table.extras["classes"]]
    return out


def write_outputs(spec: ExperimentSpec, table: ResultTable, out_dir, started: datetime,
                  elapsed: float) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [emit_csv(table, out_dir / f"{spec.label}.csv")]
    for suffix, records in _companion_records(table).items():
        files.append(emit_companion(records, out_dir / f"{spec.label}_{suffix}.csv"))
    manifest = out_dir / "manifest.txt"
    lines = [f"# mimo_aging {__version__}",
             f"# started {started.isoformat(timespec='seconds')}",
             f"# wall_clock_seconds {elapsed:.3f}",
             f"# root_seed {spec.root_seed}"]
    lines += [f"# output {p.name}" for p in files]
    lines += [f"{k} = {v}" for k, v in config_echo(spec)]
    _write_lines(manifest, lines)
    return files + [manifest]


# xxxxxxxxxxxxxxx Commands xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _execute(spec: ExperimentSpec, args) -> int:
    if spec.monte_carlo and spec.kind in ("sweepM", "sweepDoppler") \
            and spec.trials < MIN_PUBLISHED_TRIALS:
        raise ConfigError("trials", f"must be >= {MIN_PUBLISHED_TRIALS} for written results")
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    table = run_experiment(spec)
    files = write_outputs(spec, table, args.out, started, time.perf_counter() - t0)
    for f in files:
        print(f)
    return 0


def cmd_run(args) -> int:
    system, experiment = read_config(args.config)
    return _execute(resolve(system, experiment, args), args)


def cmd_preset(args) -> int:
    system, experiment = read_config(args.config) if args.config else ({}, {})
    if args.name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {args.name!r} (expected {', '.join(PRESETS)})")
    return _execute(resolve(system, experiment, args, preset_name=args.name), args)


def cmd_validate(args) -> int:
    system, experiment = read_config(args.config)
    if "preset" in experiment or "experiment" in experiment:
        spec = resolve(system, experiment, args)
        items = config_echo(spec)
    else:
        cfg = SystemConfig().replace(**system) if system else SystemConfig()
        items = cfg.to_items()
    for k, v in items:
        print(f"{k} = {v}")
    return 0


def cmd_j0_table(args) -> int:
    if args.num < 1:
        raise ConfigError("num", "must be >= 1")
    x = np.linspace(args.start, args.stop, args.num)
    lines = ["x,j0"] + [f"{xi:.17g},{yi:.17g}" for xi, yi in zip(x, bessel_j0(x))]
    if args.out:
        _write_lines(Path(args.out), lines)
    else:
        print("\n".join(lines))
    return 0


def _keys_help() -> str:
    lines = ["configuration keys (key = value, case-insensitive):", "  system:"]
    defaults = SystemConfig()
    for f in dataclasses.fields(SystemConfig):
        default = "K" if f.name == "tau" else format_value(getattr(defaults, f.name))
        lines.append(f"    {f.name:<20} [{f.metadata['unit']}] default {default}: {f.metadata['doc']}")
    lines.append("  experiment:")
    for key, (unit, default, doc) in EXPERIMENT_KEYS.items():
        lines.append(f"    {key:<20} [{unit}] default {default}: {doc}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="mimo-aging", formatter_class=fmt,
        description="Massive MIMO MRT downlink under channel aging and phase noise.",
        epilog=_keys_help())
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="key = value config file")
        p.add_argument("--trials", type=int, help="override trials")
        p.add_argument("--seed", type=int, help="override the root seed (u64)")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--paper-scale", action="store_true",
                       help="full-size grids (M up to 300) and T_c = 40000 symbols")

    p = sub.add_parser("run", help="run the experiment in a config file", formatter_class=fmt,
                       epilog=_keys_help())
    common(p, True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="run a named experiment", formatter_class=fmt,
                       epilog=_keys_help())
    p.add_argument("name", help="fig1 | fig2 | fig3 | scaling")
    common(p, False)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("validate", help="check a config file", formatter_class=fmt,
                       epilog=_keys_help())
    p.add_argument("--config", required=True)
    p.add_argument("--paper-scale", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("j0-table", help="print J0 on a uniform grid")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=20.0)
    p.add_argument("--num", type=int, default=201)
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_j0_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("seed", "trials", "threads"):
        value = getattr(args, name, None)
        if value is not None and value < 0:
            print(f"error: {name}: must be >= 0", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc.key}: {str(exc).split(': ', 1)[-1]}", file=sys.stderr)
    except (ValueError, OSError) as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
