"""Command-line front end.

Usage::

    control-capacity capacity system.json --T 1 --P 1
    control-capacity landscape system.json --T-grid 0 10 50 --P-grid 0 10 50 -o grid.csv
    control-capacity slice system.json --T-grid 0 10 50 --P-grid 0 10 50 --fix P=5
    control-capacity asymptote system.json --regime infinite_horizon --P 1
    control-capacity oracle-check system.json --T 1 --P 1 --N 1000
    control-capacity synthesize system.json --T 1 --P 1 --points 101

Exit codes: 0 success, 2 invalid arguments or configuration, 3 the solver
refused the problem (stability class, degenerate noise, conditioning).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .asymptotics import capacity_at_infinity, small_T_slope, tau_sweep
from .errors import CapacityError, ContractError
from .oracle import discretize, oracle_capacity
from .solver import LN2, SolverOptions, capacity, synthesize_controls
from .system import load_system, system_from_dict

EXIT_CONFIG = 2
EXIT_REFUSED = 3


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("grid count must be at least 1")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError("grid bounds must be finite")
        if self.start < 0 or self.stop < self.start:
            raise ConfigError("grid needs 0 <= start <= stop")

    def values(self) -> list[float]:
        if self.count == 1:
            return [float(self.start)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.count)]

    def contains(self, x: float) -> bool:
        return self.start <= x <= self.stop


@dataclass(frozen=True)
class SweepConfig:
    system: object
    T_grid: Grid
    P_grid: Grid
    options: SolverOptions
    units: str = "bits"
    threads: int = 1
    output: str | None = None


def _fmt(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _convention_line(options: SolverOptions, units: str) -> str:
    half = "applied" if options.half_factor else "dropped"
    return f"# half_factor={half} units={units} inputs={options.inputs}"


def _read_config(source: str) -> dict:
    try:
        if source.lstrip().startswith("{"):
            return json.loads(source)
        if source == "-":
            return json.load(sys.stdin)
        with open(source) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {source!r}: {exc}") from exc


def _system(cfg: dict):
    try:
        return system_from_dict(cfg.get("system", cfg))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system: {exc}") from exc


def _options(args, cfg: dict) -> SolverOptions:
    drop_half = args.paper_convention or bool(cfg.get("paper_convention", False))
    inputs = args.inputs or cfg.get("inputs", "joint")
    if inputs not in ("joint", "independent"):
        raise ConfigError("inputs must be 'joint' or 'independent'")
    return SolverOptions(half_factor=not drop_half, inputs=inputs)


def _grid(cli_value, cfg: dict, key: str) -> Grid:
    raw = cli_value if cli_value is not None else cfg.get(key)
    if raw is None:
        raise ConfigError(f"missing {key}")
    try:
        start, stop, count = raw
        return Grid(float(start), float(stop), int(count))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be [start, stop, count]") from exc


def _scalar(cli_value, cfg: dict, key: str, allow_inf=False) -> float:
    raw = cli_value if cli_value is not None else cfg.get(key)
    if raw is None:
        raise ConfigError(f"missing {key}")
    try:
        v = float(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a number") from exc
    if math.isnan(v) or v < 0 or (math.isinf(v) and not allow_inf):
        raise ConfigError(f"{key} must be non-negative" + ("" if allow_inf else " and finite"))
    return v


def sweep_config(args, cfg: dict) -> SweepConfig:
    threads = args.threads if args.threads is not None else int(cfg.get("threads", 1))
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return SweepConfig(
        system=_system(cfg),
        T_grid=_grid(args.T_grid, cfg, "T_grid"),
        P_grid=_grid(args.P_grid, cfg, "P_grid"),
        options=_options(args, cfg),
        units=args.units,
        threads=threads,
        output=args.output or cfg.get("output"),
    )


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _value(result, units):
    return result.value_bits if units == "bits" else result.value_nats


def _solve_points(system, points, options, threads):
    def one(pt):
        P, T = pt
        return capacity(system, T, P, options)

    if threads == 1:
        return [one(pt) for pt in points]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, points))


def _csv(header, rows, options, units) -> str:
    buf = io.StringIO()
    buf.write(_convention_line(options, units) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _row(r, units, fixed=None):
    out = [] if fixed == "P" else [_fmt(r.P)]
    if fixed != "T":
        out.append(_fmt(r.T))
    return out + [_fmt(_value(r, units)), str(r.allocation.iterations), str(r.allocation.converged).lower()]


def cmd_capacity(args) -> int:
    cfg = _read_config(args.config)
    system = _system(cfg)
    options = _options(args, cfg)
    T = _scalar(args.T, cfg, "T", allow_inf=True)
    P = _scalar(args.P, cfg, "P")
    result = capacity(system, T, P, options)
    out = result.to_dict()
    out["units"] = args.units
    out["value"] = _value(result, args.units)
    if args.restarts:
        out["restarts"] = _restarts(system, T, P, options, args.restarts, args.seed, result)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _restarts(system, T, P, options, k, seed, base):
    """Re-solve from random initial variances; reports the spread only."""
    rng = np.random.default_rng(seed)
    K = len(base.allocation.sigma)
    if K == 0:
        return {"count": 0, "spread_nats": 0.0}
    vals = []
    for _ in range(k):
        init = tuple(rng.dirichlet(np.ones(K)) * P)
        vals.append(capacity(system, T, P, replace(options, init=init)).value_nats)
    return {"count": k, "seed": seed, "spread_nats": float(max(vals) - min(vals)),
            "max_gap_nats": float(max(abs(v - base.value_nats) for v in vals))}


def cmd_landscape(args) -> int:
    cfg = _read_config(args.config)
    sc = sweep_config(args, cfg)
    points = [(P, T) for P in sc.P_grid.values() for T in sc.T_grid.values()]
    results = _solve_points(sc.system, points, sc.options, sc.threads)
    header = ["P", "T", f"capacity_{sc.units}", "iterations", "converged"]
    _emit(_csv(header, [_row(r, sc.units) for r in results], sc.options, sc.units), sc.output)
    return 0


def _parse_fix(text: str):
    try:
        name, value = text.split("=", 1)
        name = name.strip()
        value = float(value)
    except ValueError as exc:
        raise ConfigError("--fix must look like P=5 or T=5") from exc
    if name not in ("P", "T"):
        raise ConfigError("--fix must name P or T")
    return name, value


def cmd_slice(args) -> int:
    cfg = _read_config(args.config)
    sc = sweep_config(args, cfg)
    fix = args.fix or cfg.get("fix")
    if fix is None:
        raise ConfigError("slice needs --fix P=x or --fix T=x")
    name, value = _parse_fix(fix)
    grid = sc.P_grid if name == "P" else sc.T_grid
    if not grid.contains(value):
        raise ConfigError(f"{name}={value} lies outside the {name} grid [{grid.start}, {grid.stop}]")
    if name == "P":
        points = [(value, T) for T in sc.T_grid.values()]
        header = ["T"]
    else:
        points = [(P, value) for P in sc.P_grid.values()]
        header = ["P"]
    results = _solve_points(sc.system, points, sc.options, sc.threads)
    header += [f"capacity_{sc.units}", "iterations", "converged"]
    line = _convention_line(sc.options, sc.units) + f" {name}={_fmt(value)}"
    body = _csv(header, [_row(r, sc.units, fixed=name) for r in results], sc.options, sc.units)
    _emit(line + "\n" + body.split("\n", 1)[1], sc.output)
    return 0


def cmd_asymptote(args) -> int:
    cfg = _read_config(args.config)
    system = _system(cfg)
    options = _options(args, cfg)
    P = _scalar(args.P, cfg, "P")
    if args.regime == "infinite_horizon":
        report = capacity_at_infinity(system, P, options)
    elif args.regime == "small_T":
        report = small_T_slope(system, P, options, budget=args.budget)
    else:
        T = _scalar(args.T, cfg, "T")
        taus = args.taus or cfg.get("taus")
        if not taus:
            raise ConfigError("tau_limit needs --taus")
        report = tau_sweep(system, taus, P, T, options)
    out = report.to_dict()
    if args.units == "nats" and report.unit.startswith("bits"):
        out["value"] = report.value * LN2
        out["unit"] = report.unit.replace("bits", "nats")
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _read_config(args.config)
    system = _system(cfg)
    options = _options(args, cfg)
    T = _scalar(args.T, cfg, "T")
    P = _scalar(args.P, cfg, "P")
    if T == 0:
        raise ConfigError("oracle-check needs T > 0")
    N = args.N
    if N < 1:
        raise ConfigError("N must be at least 1")
    cont = capacity(system, T, P, options)
    orc = oracle_capacity(discretize(system, T, N), P, options.half_factor)
    gap = abs(cont.value_nats - orc.nats)
    rel = gap / cont.value_nats if cont.value_nats > 0 else gap
    out = {
        "T": T,
        "P": P,
        "N": N,
        "half_factor_applied": options.half_factor,
        "continuous_bits": cont.value_bits,
        "continuous_nats": cont.value_nats,
        "oracle_bits": orc.bits,
        "oracle_nats": orc.nats,
        "relative_gap": rel,
        "within_1e-3": bool(rel < 1e-3),
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_synthesize(args) -> int:
    cfg = _read_config(args.config)
    system = _system(cfg)
    options = _options(args, cfg)
    T = _scalar(args.T, cfg, "T")
    P = _scalar(args.P, cfg, "P")
    if T == 0 or P == 0:
        raise ConfigError("synthesize needs T > 0 and P > 0")
    if args.points < 3:
        raise ConfigError("--points must be at least 3")
    result = capacity(system, T, P, options)
    grid = np.linspace(0.0, T, args.points)
    real = synthesize_controls(system, T, result.modes, result.allocation, grid)
    active = [k for k in range(len(real.sigma)) if real.sigma[k] > 0]
    header = ["t"]
    cols = []
    for k in active:
        g = real.full(k)
        for m in range(real.p):
            header.append(f"g_{int(real.index[k])}_{int(real.channel[k])}_u{m}")
            cols.append(g[:, m])
    rows = [[_fmt(t)] + [_fmt(c[i]) for c in cols] for i, t in enumerate(grid)]
    buf = io.StringIO()
    buf.write(_convention_line(options, "bits") + f" capacity_bits={_fmt(result.value_bits)}\n")
    buf.write("# sigma=" + " ".join(_fmt(real.sigma[k]) for k in active) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _emit(buf.getvalue(), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON file, '-' for stdin, or an inline JSON object")
    common.add_argument("--paper-convention", action="store_true",
                        help="drop the 1/2 factor of the Gaussian mutual information")
    units = common.add_mutually_exclusive_group()
    units.add_argument("--bits", dest="units", action="store_const", const="bits")
    units.add_argument("--nats", dest="units", action="store_const", const="nats")
    common.set_defaults(units="bits")
    common.add_argument("--inputs", choices=("joint", "independent"), default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--seed", type=int, default=0, help="seed for multi-start diagnostics")
    common.add_argument("-o", "--output", default=None)

    grids = argparse.ArgumentParser(add_help=False)
    grids.add_argument("--T-grid", nargs=3, type=float, metavar=("START", "STOP", "COUNT"))
    grids.add_argument("--P-grid", nargs=3, type=float, metavar=("START", "STOP", "COUNT"))

    parser = argparse.ArgumentParser(prog="control-capacity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", parents=[common], help="single capacity value as JSON")
    p.add_argument("--T", type=str, default=None, help="horizon; 'inf' for the infinite horizon")
    p.add_argument("--P", type=float, default=None)
    p.add_argument("--restarts", type=int, default=0)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("landscape", parents=[common, grids], help="capacity over a (P, T) grid as CSV")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("slice", parents=[common, grids], help="capacity curve at fixed P or T")
    p.add_argument("--fix", default=None, help="P=x or T=x")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("asymptote", parents=[common], help="limiting regimes as JSON")
    p.add_argument("--regime", choices=("infinite_horizon", "small_T", "tau_limit"), required=True)
    p.add_argument("--P", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--taus", nargs="+", type=float, default=None)
    p.add_argument("--budget", choices=("energy", "rate"), default="energy")
    p.set_defaults(func=cmd_asymptote)

    p = sub.add_parser("oracle-check", parents=[common], help="compare with the discretized oracle")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--P", type=float, default=None)
    p.add_argument("--N", type=int, default=1000)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("synthesize", parents=[common], help="sample the optimal expansion functions")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--P", type=float, default=None)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_synthesize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("T_grid", "P_grid"):
        g = getattr(args, name, None)
        if g is not None:
            if g[2] != int(g[2]):
                parser.error(f"--{name.replace('_', '-')} COUNT must be an integer")
            setattr(args, name, [g[0], g[1], int(g[2])])
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
