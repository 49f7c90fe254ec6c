"""Finite-outcome parametric families and their derivative tables."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateModel, DomainError, FormatError, StepError

P_MIN = 1e-14
EPS_NORM = 1e-10

_EPS = np.finfo(float).eps


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DiscreteModel:
    """A family theta -> P_theta over N labelled outcomes.

    ``analytic_derivs(theta, k)`` returns the k-th theta-derivative of the
    probability vector; when absent, derivatives come from finite differences.
    ``norm_tol`` is the allowed normalisation defect (larger than ``EPS_NORM``
    only for truncated families, which document their tail mass).
    """

    support_labels: tuple
    prob: Callable[[float], np.ndarray]
    domain: tuple[float, float]
    analytic_derivs: Callable[[float, int], np.ndarray] | None = None
    name: str = ""
    norm_tol: float = EPS_NORM

    def __post_init__(self):
        if len(self.support_labels) < 2:
            raise DegenerateModel("a model needs at least two outcomes")

    @property
    def size(self) -> int:
        return len(self.support_labels)

    def contains(self, theta: float) -> bool:
        lo, hi = self.domain
        return lo < theta < hi

    def probabilities(self, theta: float) -> np.ndarray:
        if not self.contains(theta):
            raise DomainError(f"theta={theta!r} outside domain {self.domain}")
        return np.asarray(self.prob(theta), dtype=float)

    def check(self, theta: float) -> None:
        """Raise ``ValueError`` if P_theta is not a probability vector."""
        p = self.probabilities(theta)
        if p.shape != (self.size,):
            raise ValueError(f"prob returned shape {p.shape}, expected ({self.size},)")
        if np.any(p < 0):
            raise ValueError(f"negative probability at theta={theta}")
        if abs(p.sum() - 1.0) > self.norm_tol:
            raise ValueError(f"probabilities sum to {p.sum()!r} at theta={theta}")


@dataclass(frozen=True)
class DerivativeOptions:
    p_min: float = P_MIN
    analytic: bool = True
    step: float | None = None


@dataclass(frozen=True)
class DerivativeStack:
    """Rows D[k][i] = d^k P(x_i)/d theta^k at theta0 for k = 0..order."""

    theta0: float
    table: np.ndarray
    kept_indices: tuple[int, ...]
    labels: tuple = ()
    total_mass: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(np.atleast_2d(self.table)))
        object.__setattr__(self, "kept_indices", tuple(int(i) for i in self.kept_indices))
        if len(self.kept_indices) != self.table.shape[1]:
            raise ValueError("kept_indices does not match the table width")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(self.kept_indices))
        if math.isnan(self.total_mass):
            object.__setattr__(self, "total_mass", float(self.table[0].sum()))

    @classmethod
    def from_rows(cls, theta0: float, rows, labels: Sequence = ()) -> "DerivativeStack":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        return cls(float(theta0), rows, tuple(range(rows.shape[1])), tuple(labels))

    @property
    def order(self) -> int:
        return self.table.shape[0] - 1

    @property
    def probs(self) -> np.ndarray:
        return self.table[0]

    @property
    def n_points(self) -> int:
        return self.table.shape[1]

    @property
    def retained_mass(self) -> float:
        return float(self.table[0].sum())

    def truncated(self, n: int) -> "DerivativeStack":
        """The same stack keeping derivative rows 0..n."""
        if n > self.order:
            raise ValueError(f"stack holds order {self.order}, asked for {n}")
        return DerivativeStack(self.theta0, self.table[: n + 1], self.kept_indices, self.labels, self.total_mass)

    def row_sums(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def scaled(self, c: float) -> "DerivativeStack":
        return DerivativeStack(self.theta0, c * self.table, self.kept_indices, self.labels, c * self.total_mass)


def _central_weights(k: int) -> tuple[np.ndarray, np.ndarray]:
    # Second-order accurate central stencil for the k-th derivative.
    p = (k - 1) // 2 + 1
    offsets = np.arange(-p, p + 1, dtype=float)
    V = np.vander(offsets, increasing=True).T
    rhs = np.zeros(2 * p + 1)
    rhs[k] = math.factorial(k)
    return offsets, np.linalg.solve(V, rhs)


_STENCILS = {k: _central_weights(k) for k in range(1, 7)}


def default_step(theta0: float, k: int) -> float:
    return max(abs(theta0), 1.0) * _EPS ** (1.0 / (k + 2))


def finite_difference_derivative(f, theta0: float, k: int, h: float | None = None, domain=None):
    """k-th derivative of ``f`` at ``theta0`` by a central stencil.

    The O(h^2) stencil is evaluated at h and h/2 and combined by one
    Richardson step, (4 D(h/2) - D(h)) / 3.  ``f`` may return an array, in
    which case the derivative is taken entrywise.

    Raises
    ------
    StepError
        If ``domain`` is given and the stencil leaves the open interval.
    """
    if k not in _STENCILS:
        raise ValueError(f"derivative order must be in 1..6, got {k}")
    if h is None:
        h = default_step(theta0, k)
    offsets, weights = _STENCILS[k]
    if domain is not None:
        lo, hi = domain
        reach = offsets[-1] * h
        if not (lo < theta0 - reach and theta0 + reach < hi):
            raise StepError(f"stencil [{theta0 - reach}, {theta0 + reach}] leaves domain {domain}")

    def stencil(step):
        acc = 0.0
        for off, w in zip(offsets, weights):
            if w != 0.0:
                acc = acc + w * np.asarray(f(theta0 + off * step), dtype=float)
        return acc / step**k

    coarse = stencil(h)
    fine = stencil(h / 2)
    out = (4.0 * fine - coarse) / 3.0
    return float(out) if np.ndim(out) == 0 else out


def prune_support(stack: DerivativeStack, p_min: float = P_MIN) -> DerivativeStack:
    """Drop outcomes with P_theta0(x) <= p_min, keeping the pre-pruning mass."""
    if p_min < 0:
        raise ValueError("p_min must be non-negative")
    keep = np.flatnonzero(stack.table[0] > p_min)
    if keep.size < 2:
        raise DegenerateModel(f"only {keep.size} outcome(s) have probability above {p_min}")
    if keep.size == stack.n_points:
        return stack
    return DerivativeStack(
        stack.theta0,
        stack.table[:, keep],
        tuple(stack.kept_indices[i] for i in keep),
        tuple(stack.labels[i] for i in keep),
        stack.total_mass,
    )


def evaluate_stack(model: DiscreteModel, theta0: float, n: int, opts: DerivativeOptions | None = None) -> DerivativeStack:
    """Tabulate P and its first ``n`` derivatives at ``theta0``, then prune."""
    opts = opts or DerivativeOptions()
    if n < 1:
        raise ValueError("order must be at least 1")
    if not model.contains(theta0):
        raise DomainError(f"theta0={theta0!r} outside domain {model.domain}")
    rows = [model.probabilities(theta0)]
    for k in range(1, n + 1):
        if opts.analytic and model.analytic_derivs is not None:
            rows.append(np.asarray(model.analytic_derivs(theta0, k), dtype=float))
        else:
            rows.append(finite_difference_derivative(model.prob, theta0, k, opts.step, model.domain))
    table = np.vstack(rows)
    stack = DerivativeStack(theta0, table, tuple(range(model.size)), tuple(model.support_labels), float(table[0].sum()))
    return prune_support(stack, opts.p_min)


def polynomial_model(coeffs: Sequence[Sequence[float]], domain, labels: Sequence | None = None, name: str = "") -> DiscreteModel:
    """Model whose outcome probabilities are polynomials in theta.

    ``coeffs[i]`` holds ascending coefficients of P_theta(x_i).
    """
    polys = [np.polynomial.Polynomial(c) for c in coeffs]
    derivs: dict[int, list] = {}

    def prob(theta):
        return np.array([p(theta) for p in polys])

    def analytic(theta, k):
        if k not in derivs:
            derivs[k] = [p.deriv(k) for p in polys]
        return np.array([d(theta) for d in derivs[k]])

    labels = tuple(labels) if labels is not None else tuple(range(len(polys)))
    return DiscreteModel(labels, prob, tuple(domain), analytic, name)


# ---------------------------------------------------------------------------
# Tabulated model files: "# theta0=<v> order=<n>" then "label p d1 .. dn".

_HEADER = re.compile(r"#\s*theta0\s*=\s*(\S+)\s+order\s*=\s*(\d+)")


def read_model_file(path) -> DerivativeStack:
    theta0 = order = None
    labels, rows = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m and theta0 is None:
                theta0, order = float(m.group(1)), int(m.group(2))
            continue
        if theta0 is None:
            raise FormatError(f"{path}:{lineno}: data before '# theta0=.. order=..' header")
        parts = line.split()
        if len(parts) != order + 2:
            raise FormatError(f"{path}:{lineno}: expected {order + 2} columns, got {len(parts)}")
        labels.append(parts[0])
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if theta0 is None:
        raise FormatError(f"{path}: missing header")
    if len(rows) < 2:
        raise FormatError(f"{path}: need at least two support points")
    table = np.array(rows).T
    return DerivativeStack(theta0, table, tuple(range(len(labels))), tuple(labels), float(table[0].sum()))


def write_model_file(stack: DerivativeStack, path) -> None:
    lines = [f"# theta0={stack.theta0!r} order={stack.order}"]
    for label, col in zip(stack.labels, stack.table.T):
        lines.append(" ".join([str(label)] + [f"{v:.17g}" for v in col]))
    Path(path).write_text("\n".join(lines) + "\n")
