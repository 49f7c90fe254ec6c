"""Fisher information, Cramer-Rao and Bhattacharyya bounds for discrete models.

All quantities are built from a :class:`~bhatt.model.DerivativeStack`.  The
Bhattacharyya matrix of order n is the Gram matrix of the score rows
D[k]/D[0], k = 1..n, in the P-weighted inner product, and the order-n bound
is sup_a (a.lam)^2 / (a.C.a) with lam = (1, 0, ..., 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg
from ._linalg import TOL_RANGE, TOL_RANK
from .errors import DivergentBound
from .model import DerivativeStack


@dataclass(frozen=True)
class BhattMatrix:
    theta0: float
    entries: np.ndarray

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def leading(self, m: int) -> "BhattMatrix":
        return BhattMatrix(self.theta0, self.entries[:m, :m])


@dataclass(frozen=True)
class BoundReport:
    """Outcome of a bound computation at one order.

    ``value`` is ``inf`` when the bound diverges; ``certificate`` then holds a
    null vector a' of the Gram matrix with a'.lam = 1.
    """

    order: int
    value: float
    maximizer: np.ndarray | None
    certificate: np.ndarray | None
    effective_order: int
    rank: int

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))

    @property
    def status(self) -> str:
        return "finite" if self.finite else "divergent"


@dataclass(frozen=True)
class EstimatorTable:
    theta0: float
    values: np.ndarray
    kept_indices: tuple[int, ...]
    satisfied_order: int

    def full_values(self, size: int) -> np.ndarray:
        """Estimates over an unpruned support; pruned outcomes map to theta0."""
        out = np.full(size, self.theta0, dtype=float)
        out[list(self.kept_indices)] = self.values
        return out


@dataclass(frozen=True)
class EstimatorSystem:
    """Unbiasedness conditions A x = b for an estimator table x."""

    A: np.ndarray
    b: np.ndarray
    theta0: float
    kept_indices: tuple[int, ...]
    weights: np.ndarray | None = None

    @property
    def order(self) -> int:
        return self.A.shape[0] - 1


@dataclass(frozen=True)
class NoSolution:
    """Inconsistent system: ``witness`` satisfies w.A = 0 and w.b = 1."""

    witness: np.ndarray
    order: int
    rank: int
    rank_augmented: int


def fisher_information(stack: DerivativeStack) -> float:
    if stack.order < 1:
        raise ValueError("stack needs at least one derivative row")
    p, d1 = stack.table[0], stack.table[1]
    return float(np.sum(d1 * d1 / p))


def bhatt_matrix(stack: DerivativeStack, n: int) -> BhattMatrix:
    if not 1 <= n <= stack.order:
        raise ValueError(f"order {n} not available in a stack of order {stack.order}")
    rows = stack.table[1 : n + 1]
    scores = rows / stack.table[0]
    C = scores @ rows.T
    return BhattMatrix(stack.theta0, 0.5 * (C + C.T))


def _unit(n: int) -> np.ndarray:
    lam = np.zeros(n)
    lam[0] = 1.0
    return lam


def gram_bound(G: np.ndarray, tol_rank: float = TOL_RANK, tol_range: float = TOL_RANGE) -> BoundReport:
    """Bound from any PSD Gram matrix; shared with the quantum pipeline."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    sol = _linalg.gram_range_solve(G, _unit(n), tol_rank, tol_range)
    eff = _linalg.effective_order(G, sol.value, tol_rank, tol_range)
    return BoundReport(n, sol.value, sol.solution, sol.certificate, eff, sol.rank)


def bhatt_bound(C: BhattMatrix, tol_rank: float = TOL_RANK, tol_range: float = TOL_RANGE) -> BoundReport:
    return gram_bound(C.entries, tol_rank, tol_range)


def cramer_rao(stack: DerivativeStack, tol_rank: float = TOL_RANK) -> BoundReport:
    return bhatt_bound(bhatt_matrix(stack, 1), tol_rank)


def bhatt_estimator(stack: DerivativeStack, C: BhattMatrix, tol_rank: float = TOL_RANK) -> EstimatorTable:
    """theta0 + sum_k a_k D[k]/D[0] with C a = lam: the estimator saturating the bound."""
    report = bhatt_bound(C, tol_rank)
    if not report.finite:
        raise DivergentBound(f"order-{C.order} bound diverges at theta0={stack.theta0}")
    n = C.order
    scores = stack.table[1 : n + 1] / stack.table[0]
    values = stack.theta0 + report.maximizer @ scores
    return EstimatorTable(stack.theta0, values, stack.kept_indices, n)


def existence_system(stack: DerivativeStack, n: int) -> EstimatorSystem:
    """Rows P, dP, ..., d^nP against b = (theta0, 1, 0, ..., 0)."""
    if not 0 <= n <= stack.order:
        raise ValueError(f"order {n} not available in a stack of order {stack.order}")
    A = np.array(stack.table[: n + 1])
    b = np.zeros(n + 1)
    b[0] = stack.theta0
    if n >= 1:
        b[1] = 1.0
    return EstimatorSystem(A, b, stack.theta0, stack.kept_indices, np.array(stack.table[0]))


def solve_estimator(system: EstimatorSystem, tol_rank: float = TOL_RANK, tol_range: float = TOL_RANGE):
    """Return an :class:`EstimatorTable` or :class:`NoSolution`.

    Among all solutions the one of least variance at theta0 is returned
    (minimum norm in the P-weighted metric); without weights this is the
    plain minimum-norm solution.
    """
    K = None
    if system.weights is not None:
        K = np.diag(1.0 / np.sqrt(system.weights))
    sol = _linalg.consistent_solve(system.A, system.b, tol_rank, tol_range, K)
    if not sol.consistent:
        return NoSolution(sol.witness, system.order, sol.rank, sol.rank_augmented)
    return EstimatorTable(system.theta0, sol.x, system.kept_indices, system.order)


def constraint_residuals(stack: DerivativeStack, est: EstimatorTable) -> np.ndarray:
    """|d^l <est>/d theta^l - target_l| for l = 0..satisfied_order."""
    n = est.satisfied_order
    target = np.zeros(n + 1)
    target[0] = stack.theta0
    if n >= 1:
        target[1] = 1.0
    return np.abs(stack.table[: n + 1] @ est.values - target)


def max_nontrivial_order(stack: DerivativeStack, tol_rank: float = TOL_RANK) -> int:
    """Order beyond which higher bounds are divergent or repeat this one.

    Smallest m such that derivative rows 1..m span the same space as rows
    1..stack.order.  This is usually at most N - 1, but a vanishing
    intermediate derivative can push it higher, so no cap is applied.
    """
    C = bhatt_matrix(stack, stack.order)
    return _linalg.saturation_order(C.entries, tol_rank)


def bound_hierarchy(stack: DerivativeStack, n: int, tol_rank: float = TOL_RANK) -> list[BoundReport]:
    C = bhatt_matrix(stack, n)
    return [bhatt_bound(C.leading(m), tol_rank) for m in range(1, n + 1)]
