"""Quantum Cramer-Rao and Bhattacharyya bounds from density-matrix derivatives.

The generalised SLD L_l solves d^l rho = (rho L_l + L_l rho)/2.  The matrix
Q[k][l] = Tr(d^k rho L_l) = Re Tr(rho L_k L_l) is the Gram matrix of the L_l
in the rho-weighted inner product, so the bound logic is the classical one
applied to Q.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _linalg
from ._linalg import TOL_RANGE, TOL_RANK
from .classical import BoundReport, NoSolution, gram_bound
from .errors import DivergentBound, FormatError, SupportError
from .model import finite_difference_derivative

TOL_EIG = 1e-12
SUPPORT_LEAK = 1e-8


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


def hermitize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


@dataclass(frozen=True)
class DensityStack:
    theta0: float
    rho: np.ndarray
    derivs: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen(self.rho))
        object.__setattr__(self, "derivs", tuple(_frozen(d) for d in self.derivs))
        N = self.rho.shape[0]
        if self.rho.shape != (N, N) or any(d.shape != (N, N) for d in self.derivs):
            raise ValueError("rho and its derivatives must be square matrices of one size")

    @property
    def dimension(self) -> int:
        return self.rho.shape[0]

    @property
    def order(self) -> int:
        return len(self.derivs)

    def deriv(self, k: int) -> np.ndarray:
        """d^k rho at theta0, with k = 0 giving rho itself."""
        return self.rho if k == 0 else self.derivs[k - 1]

    def truncated(self, n: int) -> "DensityStack":
        return DensityStack(self.theta0, self.rho, self.derivs[:n])

    def conjugated(self, U: np.ndarray) -> "DensityStack":
        Ud = U.conj().T
        return DensityStack(self.theta0, U @ self.rho @ Ud, tuple(U @ d @ Ud for d in self.derivs))

    def check(self) -> None:
        """Raise ``ValueError`` when the stack is not a valid state family."""
        if np.max(np.abs(self.rho - self.rho.conj().T)) > 1e-12:
            raise ValueError("rho is not Hermitian")
        if abs(np.trace(self.rho) - 1.0) > 1e-10:
            raise ValueError("rho does not have unit trace")
        if np.linalg.eigvalsh(hermitize(self.rho))[0] < -1e-10:
            raise ValueError("rho has a negative eigenvalue")
        for k, d in enumerate(self.derivs, 1):
            if np.max(np.abs(d - d.conj().T)) > 1e-12:
                raise ValueError(f"d^{k} rho is not Hermitian")
            if abs(np.trace(d)) > 1e-10:
                raise ValueError(f"d^{k} rho is not traceless")


@dataclass(frozen=True)
class SLDSet:
    operators: tuple[np.ndarray, ...]
    support_rank: int


@dataclass(frozen=True)
class QMatrix:
    theta0: float
    entries: np.ndarray

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def leading(self, m: int) -> "QMatrix":
        return QMatrix(self.theta0, self.entries[:m, :m])


@dataclass(frozen=True)
class HermitianEstimator:
    theta0: float
    operator: np.ndarray
    satisfied_order: int


@dataclass(frozen=True)
class HermitianSystem:
    """Real form of Tr[d^l rho Theta] = b_l over Hermitian Theta.

    Unknowns are the N diagonal entries followed by (Re, Im) of each upper
    off-diagonal entry, N^2 reals in all.  ``metric`` is the matrix of
    x -> Tr[rho Theta^2] in these coordinates.
    """

    A: np.ndarray
    b: np.ndarray
    theta0: float
    basis: tuple[np.ndarray, ...]
    metric: np.ndarray

    @property
    def order(self) -> int:
        return self.A.shape[0] - 1

    @property
    def dimension(self) -> int:
        return self.basis[0].shape[0]

    @property
    def complex_unknowns(self) -> int:
        N = self.dimension
        return N * (N + 1) // 2

    def operator(self, x: np.ndarray) -> np.ndarray:
        return sum(xi * E for xi, E in zip(x, self.basis))


@dataclass(frozen=True)
class DensityFamily:
    """theta -> rho(theta), with optional analytic k-th derivatives."""

    dimension: int
    rho: Callable[[float], np.ndarray]
    analytic_derivs: Callable[[float, int], np.ndarray] | None = None
    name: str = ""

    def stack(self, theta0: float, n: int, step: float | None = None) -> DensityStack:
        if self.analytic_derivs is None:
            return density_stack_from_family(self.rho, theta0, n, step)
        derivs = tuple(np.asarray(self.analytic_derivs(theta0, k), dtype=complex) for k in range(1, n + 1))
        return DensityStack(theta0, self.rho(theta0), derivs)


def sld(rho: np.ndarray, drho: np.ndarray, tol_eig: float = TOL_EIG) -> np.ndarray:
    """Hermitian L with (rho L + L rho)/2 = drho on the support of rho.

    Pairs of eigenvectors with p_i + p_j <= tol_eig get L_ij = 0; ``drho``
    must vanish there, otherwise :class:`SupportError` is raised.
    """
    p, V = np.linalg.eigh(hermitize(np.asarray(rho, dtype=complex)))
    D = V.conj().T @ np.asarray(drho, dtype=complex) @ V
    denom = p[:, None] + p[None, :]
    inside = denom > tol_eig
    leak = np.max(np.abs(D[~inside]), initial=0.0)
    if leak >= SUPPORT_LEAK:
        raise SupportError(f"derivative has weight {leak:.3g} outside the support of rho")
    L = np.where(inside, 2.0 * D / np.where(inside, denom, 1.0), 0.0)
    return hermitize(V @ L @ V.conj().T)


def sld_set(stack: DensityStack, n: int, tol_eig: float = TOL_EIG) -> SLDSet:
    p = np.linalg.eigvalsh(hermitize(stack.rho))
    ops = tuple(sld(stack.rho, stack.deriv(l), tol_eig) for l in range(1, n + 1))
    return SLDSet(ops, int(np.count_nonzero(p > tol_eig / 2)))


def qfi(rho: np.ndarray, L: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ L @ L)))


def q_matrix(stack: DensityStack, n: int, tol_eig: float = TOL_EIG) -> QMatrix:
    if not 1 <= n <= stack.order:
        raise ValueError(f"order {n} not available in a stack of order {stack.order}")
    Ls = sld_set(stack, n, tol_eig).operators
    Q = np.array([[np.trace(stack.deriv(k) @ Ls[l - 1]) for l in range(1, n + 1)] for k in range(1, n + 1)])
    if np.max(np.abs(Q.imag), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(Q.real))):
        raise ValueError("Q has a non-negligible imaginary part")
    return QMatrix(stack.theta0, Q.real.copy())


def q_bhatt_bound(Q: QMatrix, tol_rank: float = TOL_RANK, tol_range: float = TOL_RANGE) -> BoundReport:
    return gram_bound(Q.entries, tol_rank, tol_range)


def q_bound_hierarchy(stack: DensityStack, n: int, tol_rank: float = TOL_RANK, tol_eig: float = TOL_EIG) -> list[BoundReport]:
    Q = q_matrix(stack, n, tol_eig)
    return [q_bhatt_bound(Q.leading(m), tol_rank) for m in range(1, n + 1)]


def q_bhatt_estimator(stack: DensityStack, n: int, tol_rank: float = TOL_RANK, tol_eig: float = TOL_EIG) -> HermitianEstimator:
    """theta0 I + sum_l a_l L_l with Q a = lam, saturating the order-n bound."""
    Ls = sld_set(stack, n, tol_eig).operators
    Q = QMatrix(stack.theta0, np.array([[np.real(np.trace(stack.deriv(k) @ L)) for L in Ls] for k in range(1, n + 1)]))
    report = q_bhatt_bound(Q, tol_rank)
    if not report.finite:
        raise DivergentBound(f"order-{n} quantum bound diverges at theta0={stack.theta0}")
    op = stack.theta0 * np.eye(stack.dimension, dtype=complex)
    for a, L in zip(report.maximizer, Ls):
        op = op + a * L
    return HermitianEstimator(stack.theta0, hermitize(op), n)


def hermitian_basis(N: int) -> tuple[np.ndarray, ...]:
    basis = []
    for i in range(N):
        E = np.zeros((N, N), dtype=complex)
        E[i, i] = 1.0
        basis.append(E)
    for i in range(N):
        for j in range(i + 1, N):
            R = np.zeros((N, N), dtype=complex)
            R[i, j] = R[j, i] = 1.0
            I = np.zeros((N, N), dtype=complex)
            I[i, j], I[j, i] = 1j, -1j
            basis.extend([R, I])
    return tuple(basis)


def hermitian_existence_system(stack: DensityStack, n: int) -> HermitianSystem:
    if not 0 <= n <= stack.order:
        raise ValueError(f"order {n} not available in a stack of order {stack.order}")
    basis = hermitian_basis(stack.dimension)
    A = np.array([[np.real(np.trace(stack.deriv(k) @ E)) for E in basis] for k in range(n + 1)])
    b = np.zeros(n + 1)
    b[0] = stack.theta0
    if n >= 1:
        b[1] = 1.0
    rho = stack.rho
    G = np.array([[np.real(np.trace(rho @ Ea @ Eb)) for Eb in basis] for Ea in basis])
    return HermitianSystem(A, b, stack.theta0, basis, 0.5 * (G + G.T))


def _metric_inv_sqrt(G: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(G)
    keep = w > TOL_EIG * max(w[-1], 1.0)
    # Directions invisible to rho fall back to the Euclidean norm.
    d = np.where(keep, 1.0 / np.sqrt(np.where(keep, w, 1.0)), 1.0)
    return (V * d) @ V.T


def solve_quantum_estimator(system: HermitianSystem, tol_rank: float = TOL_RANK, tol_range: float = TOL_RANGE):
    """Least-variance Hermitian estimator, or :class:`NoSolution`."""
    K = _metric_inv_sqrt(system.metric)
    sol = _linalg.consistent_solve(system.A, system.b, tol_rank, tol_range, K)
    if not sol.consistent:
        return NoSolution(sol.witness, system.order, sol.rank, sol.rank_augmented)
    return HermitianEstimator(system.theta0, hermitize(system.operator(sol.x)), system.order)


def hermitian_residuals(stack: DensityStack, est: HermitianEstimator) -> np.ndarray:
    n = est.satisfied_order
    target = np.zeros(n + 1)
    target[0] = stack.theta0
    if n >= 1:
        target[1] = 1.0
    got = np.array([np.trace(stack.deriv(k) @ est.operator) for k in range(n + 1)])
    return np.abs(got - target)


def optimal_measurement(L: np.ndarray) -> list[np.ndarray]:
    """Eigenprojectors of the SLD, degenerate eigenvalues merged."""
    w, V = np.linalg.eigh(hermitize(np.asarray(L, dtype=complex)))
    radius = np.max(np.abs(w), initial=0.0)
    tol = 1e-9 * radius
    groups: list[list[int]] = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[groups[-1][0]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [V[:, g] @ V[:, g].conj().T for g in groups]


def measured_rows(stack: DensityStack, projectors: Sequence[np.ndarray]) -> np.ndarray:
    """Classical derivative rows Tr[Pi_i d^k rho] of a measurement."""
    return np.array([[np.real(np.trace(Pi @ stack.deriv(k))) for Pi in projectors] for k in range(stack.order + 1)])


def _real_coords(M: np.ndarray) -> np.ndarray:
    N = M.shape[0]
    iu = np.triu_indices(N, 1)
    return np.concatenate([np.real(np.diag(M)), np.sqrt(2) * M[iu].real, np.sqrt(2) * M[iu].imag])


def q_max_nontrivial_order(stack: DensityStack, tol_rank: float = TOL_RANK) -> int:
    """Smallest m such that d^1 rho..d^m rho span all derivatives in the stack."""
    if stack.order == 0:
        return 0
    V = np.array([_real_coords(d) for d in stack.derivs])
    return _linalg.saturation_order(V @ V.T, tol_rank)


def quantum_order_cap(N: int) -> int:
    """Largest order with new information when N(N+1)/2 unknowns are counted."""
    return N * (N + 1) // 2 - 1


def density_stack_from_family(rho_fn: Callable[[float], np.ndarray], theta0: float, n: int, step: float | None = None) -> DensityStack:
    """Stack by entrywise finite differences, re-Hermitised."""
    rho = np.asarray(rho_fn(theta0), dtype=complex)

    def split(theta):
        m = np.asarray(rho_fn(theta), dtype=complex)
        return np.stack([m.real, m.imag])

    derivs = []
    for k in range(1, n + 1):
        re, im = finite_difference_derivative(split, theta0, k, step)
        derivs.append(hermitize(re + 1j * im))
    return DensityStack(theta0, rho, tuple(derivs))


# ---------------------------------------------------------------------------
# Density files: tokens "N theta0" followed by rho, d^1 rho, ... as row-major
# "re im" pairs.  '#' starts a comment.


def read_density_file(path) -> DensityStack:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if len(tokens) < 2:
        raise FormatError(f"{path}: missing 'N theta0' header")
    try:
        N = int(tokens[0])
        theta0 = float(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    per = 2 * N * N
    if N < 1 or vals.size == 0 or vals.size % per:
        raise FormatError(f"{path}: expected a multiple of {per} numbers after the header, got {vals.size}")
    mats = (vals[0::2] + 1j * vals[1::2]).reshape(-1, N, N)
    return DensityStack(theta0, mats[0], tuple(mats[1:]))


def write_density_file(stack: DensityStack, path) -> None:
    lines = [f"{stack.dimension} {stack.theta0!r}"]
    for k in range(stack.order + 1):
        lines.append("# rho" if k == 0 else f"# d^{k} rho")
        for row in stack.deriv(k):
            lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    Path(path).write_text("\n".join(lines) + "\n")
