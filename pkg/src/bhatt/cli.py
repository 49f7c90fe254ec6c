"""Command-line front end: ``bhatt bounds|exists|scan``.

Settings come from, in increasing precedence: built-in defaults, a flat
``key = value`` config file (``--config`` or $BHATT_CONFIG), and flags.
Exit status is 3 for an invalid configuration, 2 when ``--strict`` is set and
a requested bound diverges, 0 otherwise.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import io
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classical, quantum, scenarios
from .errors import BhattError
from .evaluation import (
    BoundTable,
    comparison_report,
    gnuplot_script,
    integrated_mse_gap,
    mse_scan,
)
from .model import DerivativeOptions, DerivativeStack, DiscreteModel, evaluate_stack, prune_support, read_model_file

EXIT_OK, EXIT_DIVERGENT, EXIT_CONFIG = 0, 2, 3

CLASSICAL_SCENARIOS = {
    "bernoulli": (scenarios.bernoulli, 0.5),
    "quad2": (scenarios.quadratic_two_point, 0.6),
    "binomial2": (lambda: scenarios.binomial(2), 0.3),
    "binomial3": (lambda: scenarios.binomial(3), 0.4),
    "cubic": (scenarios.zero_score_cubic, 0.0),
    "skip2": (scenarios.flat_second_three_point, 0.0),
}
SCENARIOS = sorted([*CLASSICAL_SCENARIOS, "mach-zehnder", "qubit", "qutrit"])
SCENARIO_ALIASES = {"mz": "mach-zehnder"}
DEFAULT_THETA0 = {"mach-zehnder": 1e-3, "qubit": 0.1, "qutrit": 0.2}


class ConfigError(BhattError, ValueError):
    pass


@dataclass
class RunConfig:
    command: str = ""
    scenario: str | None = None
    model_file: str | None = None
    density_file: str | None = None
    theta0: float | None = None
    order: int = 2
    lam: float = 0.25
    r: int = 5000
    grid: str | None = None
    deltas: str | None = None
    tol_rank: float = classical.TOL_RANK
    p_min: float = 1e-14
    tail_mass: float = 1e-12
    strict: bool = False
    out: str | None = None
    gnuplot: str | None = None
    threads: int = 1

    def validate(self) -> None:
        if self.scenario:
            self.scenario = SCENARIO_ALIASES.get(self.scenario, self.scenario)
        sources = [s for s in (self.scenario, self.model_file, self.density_file) if s]
        if len(sources) != 1:
            raise ConfigError("give exactly one of --scenario, --model-file, --density-file")
        if self.scenario and self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        floor = 0 if self.command == "exists" else 1
        if self.order < floor:
            raise ConfigError(f"order must be >= {floor}")
        if self.command == "scan" and not self.scenario:
            raise ConfigError("scan needs a parametric --scenario, not a tabulated file")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_ALIASES = {"lambda": "lam", "model": "model_file"}


def _coerce(name: str, raw):
    kind = _FIELDS[name].type
    if "bool" in kind:
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in {"1", "true", "yes", "on"}
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return str(raw)


def load_config_file(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    parser.read_string("[run]\n" + text)
    values = {}
    for key, raw in parser["run"].items():
        name = _ALIASES.get(key, key.replace("-", "_"))
        if name not in _FIELDS or name == "command":
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[name] = _coerce(name, raw)
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file (default: $BHATT_CONFIG)")
    common.add_argument("--scenario", help=f"one of: {', '.join(SCENARIOS)}")
    common.add_argument("--model-file", help="tabulated classical model ('label p d1 .. dn')")
    common.add_argument("--density-file", help="density stack file (N, theta0, rho, d^k rho)")
    common.add_argument("--theta0", type=float)
    common.add_argument("--order", type=int)
    common.add_argument("--lambda", dest="lam", type=float, help="qubit purity parameter")
    common.add_argument("--r", type=int, help="photons per arm (mach-zehnder)")
    common.add_argument("--grid", help="scan grid lo:hi:n")
    common.add_argument("--deltas", help="comma-separated interval widths for the MSE gap")
    common.add_argument("--tol-rank", type=float)
    common.add_argument("--p-min", type=float)
    common.add_argument("--tail-mass", type=float)
    common.add_argument("--strict", action="store_true", default=None)
    common.add_argument("--out", help="CSV output path")
    common.add_argument("--gnuplot", help="also write a gnuplot script (scan)")
    common.add_argument("--threads", type=int)

    parser = _Parser(prog="bhatt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("bounds", parents=[common], help="CRB/BhB table for orders 1..n")
    sub.add_parser("exists", parents=[common], help="estimator existence per order 0..n")
    sub.add_parser("scan", parents=[common], help="bias/variance/MSE across a theta grid")
    return parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    values: dict = {}
    path = args.config or environ.get("BHATT_CONFIG")
    if path:
        values.update(load_config_file(path))
    for name in _FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    values["command"] = args.command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Model resolution


def _theta0(cfg: RunConfig) -> float:
    if cfg.theta0 is not None:
        return cfg.theta0
    if cfg.scenario in CLASSICAL_SCENARIOS:
        return CLASSICAL_SCENARIOS[cfg.scenario][1]
    return DEFAULT_THETA0[cfg.scenario]


def parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"grid must look like lo:hi:n, got {spec!r}") from None
    if n < 1 or (n > 1 and not hi > lo):
        raise ConfigError(f"bad grid {spec!r}")
    return np.linspace(lo, hi, n)


def default_grid(cfg: RunConfig, domain) -> np.ndarray:
    t0 = _theta0(cfg)
    if cfg.scenario == "mach-zehnder":
        return np.linspace(0.5 * t0, 1.5 * t0, 401)
    lo, hi = domain
    half = 0.05
    # keep the grid symmetric about theta0 and strictly inside the domain
    half = min(half, (t0 - lo) * (1 - 1e-9), (hi - t0) * (1 - 1e-9))
    return np.linspace(t0 - half, t0 + half, 401)


def scan_grid(cfg: RunConfig, domain) -> np.ndarray:
    return parse_grid(cfg.grid) if cfg.grid else default_grid(cfg, domain)


def classical_model(cfg: RunConfig, window_theta: float | None = None) -> DiscreteModel:
    if cfg.scenario == "mach-zehnder":
        mz = scenarios.MachZehnderConfig(cfg.r, _theta0(cfg), cfg.tail_mass, window_theta)
        if not mz.in_tested_regime:
            print(f"warning: r*theta0 = {cfg.r * mz.theta0:g} is outside the tested small-angle regime", file=sys.stderr)
        return scenarios.mach_zehnder_model(mz)
    return CLASSICAL_SCENARIOS[cfg.scenario][0]()


def density_family(cfg: RunConfig) -> quantum.DensityFamily:
    if cfg.scenario == "qubit":
        return scenarios.qubit_model(scenarios.QubitConfig(cfg.lam, _theta0(cfg)))
    return scenarios.phase_qutrit()


def is_quantum(cfg: RunConfig) -> bool:
    return bool(cfg.density_file) or cfg.scenario in {"qubit", "qutrit"}


def classical_stack(cfg: RunConfig, order: int) -> DerivativeStack:
    if cfg.model_file:
        stack = read_model_file(cfg.model_file)
        if stack.order < order:
            raise ConfigError(f"{cfg.model_file} holds derivatives up to order {stack.order}, asked for {order}")
        return prune_support(stack.truncated(order), cfg.p_min)
    return evaluate_stack(classical_model(cfg), _theta0(cfg), max(order, 1), DerivativeOptions(p_min=cfg.p_min))


def density_stack(cfg: RunConfig, order: int) -> quantum.DensityStack:
    if cfg.density_file:
        stack = quantum.read_density_file(cfg.density_file)
        if stack.order < order:
            raise ConfigError(f"{cfg.density_file} holds derivatives up to order {stack.order}, asked for {order}")
        return stack.truncated(order)
    return density_family(cfg).stack(_theta0(cfg), max(order, 1))


def bound_table(cfg: RunConfig) -> BoundTable:
    """Bounds for orders 1..order and estimator existence for 0..order."""
    n = max(cfg.order, 1)
    if is_quantum(cfg):
        stack = density_stack(cfg, n)
        reports = quantum.q_bound_hierarchy(stack, n, cfg.tol_rank)
        exists = [
            not isinstance(quantum.solve_quantum_estimator(quantum.hermitian_existence_system(stack, m), cfg.tol_rank), classical.NoSolution)
            for m in range(n + 1)
        ]
        cap = quantum.quantum_order_cap(stack.dimension)
        return BoundTable("quantum", stack.theta0, reports, exists, quantum.q_max_nontrivial_order(stack, cfg.tol_rank), cap, {"N": stack.dimension})
    stack = classical_stack(cfg, n)
    reports = classical.bound_hierarchy(stack, n, cfg.tol_rank)
    exists = [
        not isinstance(classical.solve_estimator(classical.existence_system(stack, m), cfg.tol_rank), classical.NoSolution)
        for m in range(n + 1)
    ]
    return BoundTable(
        "classical",
        stack.theta0,
        reports,
        exists,
        classical.max_nontrivial_order(stack, cfg.tol_rank),
        stack.n_points - 1,
        {"N": stack.n_points, "retained_mass": f"{stack.retained_mass:.17g}"},
    )


def _bound_name(kind: str, order: int) -> str:
    prefix = "Q" if kind == "quantum" else ""
    return f"{prefix}CRB" if order == 1 else f"{prefix}BhB{order}"


def _g6(x: float) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_bounds(cfg: RunConfig, stdout=sys.stdout) -> int:
    table = bound_table(cfg)
    label = cfg.scenario or cfg.model_file or cfg.density_file
    stdout.write(f"model: {label}  kind: {table.kind}  theta0: {_g6(table.theta0)}  N: {table.extras['N']}\n")
    stdout.write(f"{'order':<6} {'bound':<8} {'value':>14} {'status':<10} {'effective':>9}\n")
    for rep in table.reports:
        value = _g6(rep.value) if rep.finite else "inf"
        stdout.write(f"{rep.order:<6} {_bound_name(table.kind, rep.order):<8} {value:>14} {rep.status:<10} {rep.effective_order:>9}\n")
    stdout.write(f"max_nontrivial_order: {table.max_nontrivial}  cap: {table.cap}\n")
    if cfg.out:
        with open(cfg.out, "w", newline="", encoding="utf-8") as fh:
            fh.write("order,bound,status,value,effective_order,estimator_exists\n")
            for rep, ok in zip(table.reports, table.exists[1:]):
                fh.write(f"{rep.order},{_bound_name(table.kind, rep.order)},{rep.status},{rep.value:.17g},{rep.effective_order},{str(ok).lower()}\n")
    divergent = any(not rep.finite for rep in table.reports)
    return EXIT_DIVERGENT if cfg.strict and divergent else EXIT_OK


def cmd_exists(cfg: RunConfig, stdout=sys.stdout) -> int:
    n = cfg.order
    any_missing = False
    if is_quantum(cfg):
        stack = density_stack(cfg, n)
        results = [quantum.solve_quantum_estimator(quantum.hermitian_existence_system(stack, m), cfg.tol_rank) for m in range(n + 1)]
        stdout.write(f"kind: quantum  N: {stack.dimension}  real unknowns: {stack.dimension ** 2}  complex count: {stack.dimension * (stack.dimension + 1) // 2}\n")
    else:
        stack = classical_stack(cfg, n)
        results = [classical.solve_estimator(classical.existence_system(stack, m), cfg.tol_rank) for m in range(n + 1)]
        stdout.write(f"kind: classical  N: {stack.n_points}\n")
    for m, res in enumerate(results):
        if isinstance(res, classical.NoSolution):
            any_missing = True
            w = " ".join(_g6(v) for v in res.witness)
            stdout.write(f"order {m}: unsolvable  rank(A)={res.rank} rank(A|b)={res.rank_augmented} witness=[{w}]\n")
        else:
            stdout.write(f"order {m}: solvable\n")
    return EXIT_DIVERGENT if cfg.strict and any_missing else EXIT_OK


def _deltas(cfg: RunConfig, grid: np.ndarray, theta0: float) -> list[float]:
    if cfg.deltas:
        try:
            return [float(v) for v in cfg.deltas.split(",")]
        except ValueError:
            raise ConfigError(f"bad --deltas {cfg.deltas!r}") from None
    span = 2.0 * min(theta0 - grid[0], grid[-1] - theta0)
    if span <= 0:
        return []
    return list(np.linspace(span / 10, span, 10))


def run_scan(cfg: RunConfig):
    """Curves, bound table and MSE gaps for a scan; shared by the CLI and tests."""
    t0 = _theta0(cfg)
    n = cfg.order
    if is_quantum(cfg):
        family = density_family(cfg)
        grid = scan_grid(cfg, (-math.inf, math.inf))
        table = bound_table(cfg)
        stack = family.stack(t0, n)
        curves = []
        for m in range(1, n + 1):
            if not table.reports[m - 1].finite:
                print(f"note: order {m} bound diverges; no estimator scanned", file=sys.stderr)
                continue
            est = quantum.q_bhatt_estimator(stack, m, cfg.tol_rank)
            curves.append(mse_scan(family, est, grid, _bound_name("quantum", m).lower(), cfg.threads))
    else:
        probe = classical_model(cfg)
        grid = scan_grid(cfg, probe.domain)
        model = classical_model(cfg, window_theta=float(grid[-1])) if cfg.scenario == "mach-zehnder" else probe
        stack = evaluate_stack(model, t0, n, DerivativeOptions(p_min=cfg.p_min))
        reports = classical.bound_hierarchy(stack, n, cfg.tol_rank)
        exists = [
            not isinstance(classical.solve_estimator(classical.existence_system(stack, m), cfg.tol_rank), classical.NoSolution)
            for m in range(n + 1)
        ]
        table = BoundTable("classical", t0, reports, exists, classical.max_nontrivial_order(stack, cfg.tol_rank), stack.n_points - 1, {"N": stack.n_points})
        C = classical.bhatt_matrix(stack, n)
        curves = []
        for m in range(1, n + 1):
            if not reports[m - 1].finite:
                print(f"note: order {m} bound diverges; no estimator scanned", file=sys.stderr)
                continue
            est = classical.bhatt_estimator(stack, C.leading(m), cfg.tol_rank)
            curves.append(mse_scan(model, est, grid, _bound_name("classical", m).lower(), cfg.threads))
    gaps = []
    if curves and grid.size > 1:
        base = curves[0]
        for other in curves[1:]:
            for d in _deltas(cfg, grid, t0):
                gaps.append((base.name, other.name, d, integrated_mse_gap(base, other, d, t0)))
    return curves, table, gaps


def cmd_scan(cfg: RunConfig, stdout=sys.stdout) -> int:
    curves, table, gaps = run_scan(cfg)
    if cfg.out:
        summary = comparison_report(curves, table, cfg.out)
        stdout.write(summary)
        if gaps:
            stdout.write("integrated MSE gap (positive: second estimator better)\n")
            for a, b, d, g in gaps:
                stdout.write(f"{a} - {b}  delta={_g6(d)}  gap={_g6(g)}\n")
    else:
        comparison_report(curves, table, stdout)
    if cfg.gnuplot:
        Path(cfg.gnuplot).write_text(gnuplot_script(cfg.out or "scan.csv", [c.name for c in curves]))
    divergent = any(not rep.finite for rep in table.reports)
    return EXIT_DIVERGENT if cfg.strict and divergent else EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "exists": cmd_exists, "scan": cmd_scan}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (BhattError, ValueError, OSError, configparser.Error) as exc:
        print(f"bhatt: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    buf = io.StringIO()
    try:
        code = COMMANDS[cfg.command](cfg, buf)
    except (BhattError, ValueError, OSError) as exc:
        print(f"bhatt: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(buf.getvalue())
    sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
