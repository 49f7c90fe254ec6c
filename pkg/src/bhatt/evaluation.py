"""Bias, variance and MSE of estimators across parameter grids, plus reports."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classical import BoundReport, EstimatorTable
from .errors import DimensionMismatch, GridMismatch, SupportMismatch
from .model import DiscreteModel
from .quantum import DensityFamily, HermitianEstimator

CSV_COLUMNS = ("theta", "estimator", "bias", "variance", "mse", "bound_cr", "bound_bh")


@dataclass(frozen=True)
class Moments:
    bias: float
    variance: float
    mse: float


@dataclass(frozen=True)
class MSECurve:
    name: str
    grid: np.ndarray
    bias: np.ndarray
    variance: np.ndarray
    mse: np.ndarray

    def __len__(self):
        return len(self.grid)


@dataclass(frozen=True)
class BiasBoundCheck:
    passed: bool
    max_slack: float
    min_slack: float
    slack: np.ndarray


@dataclass
class BoundTable:
    """Bounds at orders 1..n plus existence verdicts, for reports and the CLI."""

    kind: str
    theta0: float
    reports: list[BoundReport]
    exists: list[bool]
    max_nontrivial: int
    cap: int | None = None
    extras: dict = field(default_factory=dict)

    @property
    def cr(self) -> float:
        return self.reports[0].value

    @property
    def bh(self) -> float:
        return self.reports[-1].value


def _moments(p: np.ndarray, values: np.ndarray, theta: float) -> Moments:
    mean = math.fsum(p * values)
    bias = mean - theta
    variance = float(p @ (values - mean) ** 2)
    return Moments(bias, variance, variance + bias * bias)


def estimator_moments(model: DiscreteModel, est: EstimatorTable, theta: float) -> Moments:
    """Exact bias, variance and MSE of a table estimator at ``theta``."""
    p = model.probabilities(theta)
    if max(est.kept_indices) >= p.size:
        raise SupportMismatch(f"estimator indexes {max(est.kept_indices) + 1} outcomes, model has {p.size}")
    return _moments(p, est.full_values(p.size), theta)


def quantum_estimator_moments(rho_fn: Callable[[float], np.ndarray], est: HermitianEstimator, theta: float) -> Moments:
    rho = np.asarray(rho_fn(theta), dtype=complex)
    op = est.operator
    if rho.shape != op.shape:
        raise DimensionMismatch(f"state is {rho.shape}, estimator is {op.shape}")
    mean = float(np.real(np.trace(rho @ op)))
    shifted = op - mean * np.eye(op.shape[0])
    variance = float(np.real(np.trace(rho @ shifted @ shifted)))
    bias = mean - theta
    return Moments(bias, variance, variance + bias * bias)


def _scan(moments: Callable[[float], Moments], grid, name: str, threads: int) -> MSECurve:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if threads > 1:
        # map preserves grid order, so output matches the sequential path
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(moments, grid))
    else:
        rows = [moments(t) for t in grid]
    return MSECurve(
        name,
        grid,
        np.array([r.bias for r in rows]),
        np.array([r.variance for r in rows]),
        np.array([r.mse for r in rows]),
    )


def mse_scan(model, est, grid: Sequence[float], name: str = "", threads: int = 1) -> MSECurve:
    """Moments of ``est`` on a strictly increasing grid.

    ``model`` is a :class:`DiscreteModel` for table estimators, or a
    :class:`DensityFamily` / callable theta -> rho for Hermitian ones.
    """
    if isinstance(est, HermitianEstimator):
        rho_fn = model.rho if isinstance(model, DensityFamily) else model
        return _scan(lambda t: quantum_estimator_moments(rho_fn, est, t), grid, name, threads)
    return _scan(lambda t: estimator_moments(model, est, t), grid, name, threads)


def bias_bound_check(curve: MSECurve, rtol: float = 1e-10) -> BiasBoundCheck:
    """Check bias^2 <= MSE pointwise; failures are reported, not raised."""
    slack = curve.mse - curve.bias**2
    passed = bool(np.all(slack >= -rtol * np.maximum(curve.mse, np.finfo(float).tiny)))
    return BiasBoundCheck(passed, float(slack.max()), float(slack.min()), slack)


def integrated_mse_gap(curve_a: MSECurve, curve_b: MSECurve, delta: float, theta0: float) -> float:
    """Trapezoid integral of MSE_a - MSE_b over [theta0 - delta/2, theta0 + delta/2].

    Positive values mean ``curve_b`` has the lower MSE on the interval.
    Interval ends falling between grid points are linearly interpolated.
    """
    if curve_a.grid.shape != curve_b.grid.shape or not np.array_equal(curve_a.grid, curve_b.grid):
        raise GridMismatch("curves are sampled on different grids")
    grid = curve_a.grid
    lo, hi = theta0 - delta / 2, theta0 + delta / 2
    span = grid[-1] - grid[0]
    slop = 1e-12 * max(span, abs(theta0))
    if delta < 0 or lo < grid[0] - slop or hi > grid[-1] + slop:
        raise GridMismatch(f"interval [{lo}, {hi}] not covered by grid [{grid[0]}, {grid[-1]}]")
    lo, hi = max(lo, grid[0]), min(hi, grid[-1])
    diff = curve_a.mse - curve_b.mse
    inner = (grid > lo) & (grid < hi)
    xs = np.concatenate([[lo], grid[inner], [hi]])
    ys = np.concatenate([[np.interp(lo, grid, diff)], diff[inner], [np.interp(hi, grid, diff)]])
    return float(np.trapezoid(ys, xs))


def grid_derivatives(values: np.ndarray, grid: np.ndarray, index: int, orders: int = 2) -> list[float]:
    """First ``orders`` derivatives at ``grid[index]`` from 7-point central stencils.

    Sixth-order accurate for k = 1, 2 (fourth-order for k = 3); the grid
    must be uniform over the three points on either side of ``index``.
    """
    if index < 3 or index + 3 >= len(grid):
        raise GridMismatch("need three grid points on each side")
    h = grid[index + 1] - grid[index]
    f = np.asarray(values[index - 3 : index + 4], dtype=float)
    stencils = {
        1: np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / (60 * h),
        2: np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / (180 * h * h),
        3: np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / (8 * h**3),
    }
    return [float(stencils[k] @ f) for k in range(1, orders + 1)]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(curves: Sequence[MSECurve], bounds: BoundTable | None, out) -> None:
    cr = bh = float("nan")
    if bounds is not None:
        cr, bh = bounds.cr, bounds.bh
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for curve in curves:
        for i, theta in enumerate(curve.grid):
            writer.writerow(
                [_fmt(theta), curve.name, _fmt(curve.bias[i]), _fmt(curve.variance[i]), _fmt(curve.mse[i]), _fmt(cr), _fmt(bh)]
            )


def summary_text(bounds: BoundTable) -> str:
    lines = [f"kind: {bounds.kind}", f"theta0: {bounds.theta0:.6g}"]
    for rep, ok in zip(bounds.reports, bounds.exists[1:]):
        value = f"{rep.value:.6g}" if rep.finite else "divergent"
        verdict = "exists" if ok else "none"
        lines.append(f"order {rep.order}: bound={value} effective_order={rep.effective_order} estimator={verdict}")
    lines.append(f"max_nontrivial_order: {bounds.max_nontrivial}")
    if bounds.cap is not None:
        lines.append(f"order_cap: {bounds.cap}")
    for key, val in bounds.extras.items():
        lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"


def comparison_report(curves: Sequence[MSECurve], bounds: BoundTable | None, out, summary_out=None) -> str:
    """Write the comparison CSV to ``out`` (path or text stream); return the summary.

    Output bytes depend only on the inputs.
    """
    if hasattr(out, "write"):
        write_csv(curves, bounds, out)
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_csv(curves, bounds, fh)
    summary = summary_text(bounds) if bounds is not None else ""
    if summary_out is not None:
        if hasattr(summary_out, "write"):
            summary_out.write(summary)
        else:
            with open(summary_out, "w", encoding="utf-8") as fh:
                fh.write(summary)
    return summary


def gnuplot_script(csv_path: str, names: Sequence[str], column: str = "mse") -> str:
    """A gnuplot script plotting one CSV column against theta per estimator."""
    idx = CSV_COLUMNS.index(column) + 1
    plots = ", ".join(
        f"'{csv_path}' using (strcol(2) eq '{n}' ? $1 : 1/0):{idx} with lines title '{n}'" for n in names
    )
    return "\n".join(
        [
            "set datafile separator ','",
            "set key autotitle columnhead",
            "set xlabel 'theta'",
            f"set ylabel '{column}'",
            f"plot {plots}",
            "",
        ]
    )
