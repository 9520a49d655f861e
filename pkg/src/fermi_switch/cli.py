"""Command-line entry point: ``fermi-switch run|validate|sweep``.

A run reads a YAML mapping, validates every key, performs one experiment and
writes into the output directory:

* ``<experiment>.dat``: ``#`` header (tool version, every config key), then
  whitespace-separated columns with 17 significant digits;
* ``summary.json``: config echo, results and per-invariant pass/fail;
* ``<experiment>.gp``: a gnuplot script (only with ``--emit-plot``).

Exit status: 0 ok, 2 bad config or arguments, 3 invariant violated,
4 resource limit, 5 convergence failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .errors import (ArgumentError, ConfigError, ConfigNotFoundError, ConfigParseError,
                     ConfigValidationError, ConvergenceError, InvariantViolation,
                     ResourceLimitError)

TOOL = "fermi-switch"
OUTPUT_ENV = "FERMI_SWITCH_OUT"
DEFAULT_OUTPUT = "fermi_switch_out"
EXPERIMENTS = ("trace", "causality", "slope_fit", "convergence", "commutator_check",
               "theory_curves")
REQUIRED = ("omega", "d_A", "d_B", "x_A", "x_B")
NORM_LIMIT = 1e-9
ENERGY_LIMIT = 1e-8


@dataclass(frozen=True)
class RunConfig:
    omega: float
    d_A: float
    d_B: float
    x_A: float
    x_B: float
    speed: float = 1.0
    normalization: float = 1.0
    omega_B: float | None = None
    mode_count: int = 64
    k_max: float = 20.0
    n_max: int = 2
    t_max: float = 0.3
    samples: int = 61
    initial_state: str = "switch"
    experiment: str = "trace"
    output_dir: str | None = None
    variation: str = "remove_B"
    omega_B_factor: float = 1.5
    margin: float = 0.1
    fit_window: list | None = None
    grids: list | None = None
    pre_cone_tolerance: float | None = None
    depth: int = 4
    symbolic_modes: int | None = None
    dt: float = 0.01
    tolerance: float = 1e-10
    krylov_dim: int = 20

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.samples)

    def physical(self):
        from .causality import PhysicalParams
        return PhysicalParams(self.omega, self.d_A, self.d_B, self.x_A, self.x_B, self.speed,
                              self.normalization, self.omega_B, self.initial_state,
                              self.omega_B_factor, self.margin)

    def propagator(self):
        from .evolve import PropagatorConfig
        return PropagatorConfig(self.dt, self.tolerance, self.krylov_dim)

    def to_mapping(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ validation

def _number(key, value, *, positive=False, nonnegative=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(key, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigValidationError(key, f"must be finite, got {value!r}")
    if positive and not value > 0:
        raise ConfigValidationError(key, f"must be > 0, got {value!r}")
    if nonnegative and value < 0:
        raise ConfigValidationError(key, f"must be >= 0, got {value!r}")
    return value


def _integer(key, value, minimum) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigValidationError(key, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigValidationError(key, f"must be >= {minimum}, got {value!r}")
    return value


def _choice(options) -> Callable:
    def check(key, value):
        if value not in options:
            raise ConfigValidationError(key, f"must be one of {list(options)}, got {value!r}")
        return value
    return check


def _optional(check: Callable) -> Callable:
    return lambda key, value: None if value is None else check(key, value)


def _even_modes(key, value):
    value = _integer(key, value, 2)
    if value % 2:
        raise ConfigValidationError(key, f"must be even, got {value}")
    return value


def _window(key, value):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigValidationError(key, f"expected [lo, hi], got {value!r}")
    lo, hi = (_number(key, v, nonnegative=True) for v in value)
    if not lo < hi:
        raise ConfigValidationError(key, f"needs lo < hi, got {value!r}")
    return [lo, hi]


def _grids(key, value):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigValidationError(key, f"expected a list of [M, k_max, n_max], got {value!r}")
    out = []
    for item in value:
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise ConfigValidationError(key, f"entry {item!r} is not [M, k_max, n_max]")
        out.append([_even_modes(key, item[0]), _number(key, item[1], positive=True),
                    _integer(key, item[2], 0)])
    return out


def _string(key, value):
    if not isinstance(value, str) or not value:
        raise ConfigValidationError(key, f"expected a non-empty string, got {value!r}")
    return value


_CHECKS: dict[str, Callable] = {
    "omega": lambda k, v: _number(k, v, positive=True),
    "d_A": _number,
    "d_B": _number,
    "x_A": _number,
    "x_B": _number,
    "speed": lambda k, v: _number(k, v, positive=True),
    "normalization": lambda k, v: _number(k, v, positive=True),
    "omega_B": _optional(lambda k, v: _number(k, v, positive=True)),
    "mode_count": _even_modes,
    "k_max": lambda k, v: _number(k, v, positive=True),
    "n_max": lambda k, v: _integer(k, v, 0),
    "t_max": lambda k, v: _number(k, v, nonnegative=True),
    "samples": lambda k, v: _integer(k, v, 1),
    "initial_state": _choice(("switch", "eA_gB", "gA_eB")),
    "experiment": _choice(EXPERIMENTS),
    "output_dir": _optional(_string),
    "variation": _choice(("remove_B", "shift_omega_B", "flip_dB_sign")),
    "omega_B_factor": lambda k, v: _number(k, v, positive=True),
    "margin": lambda k, v: _number(k, v, nonnegative=True),
    "fit_window": _optional(_window),
    "grids": _optional(_grids),
    "pre_cone_tolerance": _optional(lambda k, v: _number(k, v, positive=True)),
    "depth": lambda k, v: _integer(k, v, 0),
    "symbolic_modes": _optional(lambda k, v: _integer(k, v, 1)),
    "dt": lambda k, v: _number(k, v, positive=True),
    "tolerance": lambda k, v: _number(k, v, positive=True),
    "krylov_dim": lambda k, v: _integer(k, v, 2),
}
assert set(_CHECKS) == {f.name for f in fields(RunConfig)}


def config_from_mapping(data: Any) -> RunConfig:
    """Validate a parsed mapping; errors name the offending key."""
    if not isinstance(data, dict):
        raise ConfigValidationError("<root>", f"expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(_CHECKS))
    if unknown:
        raise ConfigValidationError(unknown[0], "unknown key")
    for key in REQUIRED:
        if key not in data:
            raise ConfigValidationError(key, "missing required key")
    values = {key: _CHECKS[key](key, value) for key, value in data.items()}
    cfg = RunConfig(**values)
    if not cfg.margin < 1:
        raise ConfigValidationError("margin", f"must be < 1, got {cfg.margin!r}")
    if not cfg.tolerance < 1:
        raise ConfigValidationError("tolerance", f"must be < 1, got {cfg.tolerance!r}")
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFoundError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return config_from_mapping(data)


# ----------------------------------------------------------------- experiments

@dataclass
class Outcome:
    columns: list[str]
    rows: np.ndarray
    results: dict
    invariants: dict


def _check(value, limit, ok=None) -> dict:
    passed = bool(value <= limit) if ok is None else bool(ok)
    return {"pass": passed, "value": value, "limit": limit}


def _trace_invariants(traces) -> dict:
    inv = {}
    for i, tr in enumerate(traces):
        suffix = "" if len(traces) == 1 else f"_{i}"
        inv[f"norm{suffix}"] = _check(tr.metadata["max_norm_defect"], NORM_LIMIT)
        inv[f"energy{suffix}"] = _check(tr.metadata["max_relative_energy_drift"], ENERGY_LIMIT)
        low = float(min(tr.p_eA.min(), tr.p_eB.min()))
        high = float(max(tr.p_eA.max(), tr.p_eB.max()))
        inv[f"probability_bounds{suffix}"] = {
            "pass": bool(low >= -1e-9 and high <= 1 + 1e-9), "value": [low, high],
            "limit": [0.0, 1.0]}
    return inv


def _specs(cfg: RunConfig):
    from .causality import BasisSpec, GridSpec
    return GridSpec(cfg.mode_count, cfg.k_max), BasisSpec(cfg.n_max)


def _exp_trace(cfg: RunConfig, threads: int) -> Outcome:
    from .causality import simulate_trace
    grid, basis = _specs(cfg)
    tr = simulate_trace(cfg.physical(), grid, basis, cfg.times, cfg.propagator())
    inv = _trace_invariants([tr])
    if cfg.initial_state == "switch":
        p0 = [float(tr.p_eA[0]), float(tr.p_eB[0])]
        inv["initial_probabilities"] = {
            "pass": all(abs(p - 0.5) <= 1e-12 for p in p0), "value": p0, "limit": 1e-12}
    return Outcome(["t", "p_eA", "p_eB"], np.column_stack([tr.times, tr.p_eA, tr.p_eB]),
                   {"provenance": tr.metadata}, inv)


def _causality_results(report) -> dict:
    return report.summary()


def _exp_causality(cfg: RunConfig, threads: int) -> Outcome:
    from .causality import run_paired
    grid, basis = _specs(cfg)
    rep = run_paired(cfg.physical(), grid, basis, cfg.times, cfg.variation,
                     cfg.propagator(), threads)
    inv = _trace_invariants(rep.traces)
    if cfg.pre_cone_tolerance is not None and rep.pre_cone_max is not None:
        inv["pre_cone"] = _check(rep.pre_cone_max, cfg.pre_cone_tolerance)
    base, other = rep.traces
    rows = np.column_stack([rep.times, base.p_eA, other.p_eA, rep.epsilon])
    return Outcome(["t", "p_eA", "p_eA_varied", "epsilon"], rows, _causality_results(rep), inv)


def _exp_slope_fit(cfg: RunConfig, threads: int) -> Outcome:
    from .causality import cross_term_slope_fit, odd_part, run_paired
    from .model import build_grid
    from .theory import continuum_cross_term, cross_term_slope, discrete_cross_term
    params = cfg.physical()
    grid, basis = _specs(cfg)
    rep = run_paired(params, grid, basis, cfg.times, "flip_dB_sign", cfg.propagator(), threads)
    window = cfg.fit_window or [params.cone_time, cfg.t_max]
    slope = cross_term_slope_fit(params, rep.traces, window)
    theory = params.theory()
    reference = cross_term_slope(theory)
    field_grid = build_grid(cfg.mode_count, cfg.k_max, cfg.speed, cfg.normalization)
    odd = odd_part(rep.traces)
    factor = 1.0 if cfg.initial_state == "switch" else 0.0
    oracle = np.array([factor * discrete_cross_term(theory, field_grid, t) for t in rep.times])
    continuum = np.array([factor * continuum_cross_term(theory, t) for t in rep.times])
    results = {
        "fit_window": list(window),
        "slope": slope,
        "reference_slope": reference,
        "ratio": slope / reference if reference else None,
        "pre_cone_max": rep.pre_cone_max,
        "oracle_max_deviation": float(np.max(np.abs(odd - oracle))),
        "provenance": rep.provenance,
    }
    rows = np.column_stack([rep.times, rep.traces[0].p_eA, rep.traces[1].p_eA, odd, oracle,
                            continuum])
    return Outcome(["t", "p_eA_plus", "p_eA_minus", "odd", "oracle", "continuum"], rows,
                   results, _trace_invariants(rep.traces))


def _exp_convergence(cfg: RunConfig, threads: int) -> Outcome:
    from .causality import convergence_study
    grids = cfg.grids or [[cfg.mode_count, cfg.k_max, cfg.n_max],
                          [2 * cfg.mode_count, cfg.k_max, cfg.n_max]]
    rep = convergence_study(cfg.physical(), grids, cfg.times, cfg.variation, cfg.propagator(),
                            threads)
    rows = np.array([[r["mode_count"], r["k_max"], r["max_total_photons"],
                      np.nan if r["pre_cone_max"] is None else r["pre_cone_max"],
                      np.nan if r["post_cone_max"] is None else r["post_cone_max"]]
                     for r in rep.convergence])
    inv = _trace_invariants(rep.traces)
    return Outcome(["mode_count", "k_max", "n_max", "pre_cone_max", "post_cone_max"], rows,
                   _causality_results(rep), inv)


def _exp_commutator_check(cfg: RunConfig, threads: int) -> Outcome:
    from . import algebra as alg
    modes = cfg.symbolic_modes or max(1, cfg.depth)
    H = alg.HamiltonianSymbolic(modes).expr()
    rows, per_seed = [], {}
    chains = {}
    for name, seed in (("sx", alg.sx("A")), ("sy", alg.sy("A"))):
        chains[name] = alg.nested_commutators(alg.OperatorExpr.product(seed), H, cfg.depth)
    passed = True
    for name, chain in chains.items():
        per_seed[name] = []
        for n, expr in enumerate(chain):
            continuum = sorted(alg.continuum_dependence(expr)[0])
            per_seed[name].append({"depth": n, "terms": len(expr),
                                   "support": continuum, "literal_support": sorted(expr.atoms())})
            if n >= 1 and continuum != ["A"]:
                passed = False
    for n in range(cfg.depth + 1):
        row = [n]
        for name in chains:
            entry = per_seed[name][n]
            row += [entry["terms"], int("B" in entry["support"])]
        rows.append(row)
    results = {"symbolic_modes": modes, "seeds": per_seed}
    inv = {"support_A_only": {"pass": passed, "value": passed, "limit": True}}
    return Outcome(["depth", "sx_terms", "sx_has_B", "sy_terms", "sy_has_B"],
                   np.array(rows, dtype=float), results, inv)


def _exp_theory_curves(cfg: RunConfig, threads: int) -> Outcome:
    from .theory import PerturbativePrediction, continuum_cross_term
    params = cfg.physical().theory()
    pred = PerturbativePrediction(params, cfg.initial_state)
    curves = pred.curves(cfg.times)
    factor = 1.0 if cfg.initial_state == "switch" else 0.0
    continuum = np.array([factor * continuum_cross_term(params, t) for t in cfg.times])
    before = curves["t"] < params.cone_time
    zero_before = bool(np.all(curves["p_eAB"][before] == 0.0))
    rows = np.column_stack([curves["t"], curves["p_eAA"], curves["p_eAB"],
                            curves["p_eA_total_leading"], continuum])
    return Outcome(["t", "p_eAA", "p_eAB", "p_eA_total_leading", "continuum_cross"], rows,
                   {"cone_time": params.cone_time},
                   {"p_eAB_zero_before_cone": {"pass": zero_before, "value": zero_before,
                                               "limit": True}})


_EXPERIMENTS: dict[str, Callable[[RunConfig, int], Outcome]] = {
    "trace": _exp_trace,
    "causality": _exp_causality,
    "slope_fit": _exp_slope_fit,
    "convergence": _exp_convergence,
    "commutator_check": _exp_commutator_check,
    "theory_curves": _exp_theory_curves,
}


# --------------------------------------------------------------------- output

def _header(cfg: RunConfig, columns: list[str]) -> str:
    lines = [f"# {TOOL} {__version__}", f"# experiment: {cfg.experiment}"]
    for key, value in cfg.to_mapping().items():
        lines.append(f"# {key}: {json.dumps(value)}")
    lines.append("# columns: " + " ".join(columns))
    return "\n".join(lines) + "\n"


def _format_row(row) -> str:
    return " ".join(f"{float(v):.17g}" for v in row)


def _plot_script(cfg: RunConfig, data_name: str, columns: list[str]) -> str:
    stem = Path(data_name).stem
    plots = ", \\\n     ".join(
        f"'{data_name}' using 1:{i + 1} with linespoints title '{name}'"
        for i, name in enumerate(columns) if i)
    return (f"# {TOOL} {__version__}\n"
            f"# experiment: {cfg.experiment}\n"
            "set terminal pngcairo size 900,600\n"
            f"set output '{stem}.png'\n"
            f"set xlabel '{columns[0]}'\n"
            "set key left top\n"
            f"plot {plots}\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _clean(value):
    """Replace non-finite floats with None so the summary is strict JSON."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def run(cfg: RunConfig, out_dir: str | os.PathLike, threads: int = 2,
        emit_plot: bool = False) -> tuple[int, dict]:
    """Run one experiment and write its files; returns ``(exit_status, summary)``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        outcome = _EXPERIMENTS[cfg.experiment](cfg, threads)
        data_name = f"{cfg.experiment}.dat"
        lines = [_header(cfg, outcome.columns)]
        lines += [_format_row(r) + "\n" for r in np.atleast_2d(outcome.rows)]
        target = out / data_name
        written.append(target)
        target.write_text("".join(lines))
        files = [data_name]
        if emit_plot:
            script = out / f"{cfg.experiment}.gp"
            written.append(script)
            script.write_text(_plot_script(cfg, data_name, outcome.columns))
            files.append(script.name)
        status = "pass" if all(v["pass"] for v in outcome.invariants.values()) else "fail"
        summary = {
            "tool": TOOL,
            "version": __version__,
            "experiment": cfg.experiment,
            "config": cfg.to_mapping(),
            "results": outcome.results,
            "invariants": outcome.invariants,
            "status": status,
            "files": files + ["summary.json"],
        }
        target = out / "summary.json"
        written.append(target)
        target.write_text(json.dumps(_clean(json.loads(json.dumps(summary, default=_json_default))),
                                     indent=2, sort_keys=True) + "\n")
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return (0 if status == "pass" else 3), summary


# ------------------------------------------------------------------------ CLI

def _output_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _parse_vary(items: list[str]) -> list[tuple[str, list]]:
    out = []
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not key or not values:
            raise ArgumentError(f"--vary expects key=v1,v2,..., got {item!r}")
        out.append((key, [yaml.safe_load(v) for v in values.split(",")]))
    return out


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(yaml.safe_dump(cfg.to_mapping(), sort_keys=False), end="")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _output_dir(args, cfg)
    status, summary = run(cfg, out, args.threads, args.emit_plot)
    print(f"{cfg.experiment}: {summary['status']} -> {out}")
    return status


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    base = cfg.to_mapping()
    axes = _parse_vary(args.vary)
    root = _output_dir(args, cfg)
    combos = []
    for values in itertools.product(*(vals for _, vals in axes)):
        mapping = dict(base)
        mapping.update({key: v for (key, _), v in zip(axes, values)})
        name = ",".join(f"{key}={v}" for (key, _), v in zip(axes, values))
        combos.append((name, config_from_mapping(mapping)))
    worst = 0
    index = []
    for name, sub in combos:
        status, summary = run(sub, root / name, args.threads, args.emit_plot)
        worst = max(worst, status)
        index.append({"name": name, "status": summary["status"]})
        print(f"{name}: {summary['status']}")
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(json.dumps({"tool": TOOL, "version": __version__,
                                                 "runs": index}, indent=2) + "\n")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or "
                                     f"./{DEFAULT_OUTPUT})")
        p.add_argument("--threads", type=int, default=2, help="worker threads (default 2)")
        p.add_argument("--emit-plot", action="store_true", help="also write a gnuplot script")

    p = sub.add_parser("run", help="run the configured experiment")
    common(p)
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("validate", help="check a config and print it with defaults")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("sweep", help="run a config over a grid of overrides")
    common(p)
    p.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2,...")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ResourceLimitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except ConvergenceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
