"""Rank-revealing solves shared by the classical and quantum pipelines.

Two kinds of matrices show up.  Gram matrices (the Bhattacharyya matrix C and
its quantum analogue Q) are tested against ``tol_rank`` directly.  Raw design
matrices, whose Gram matrices are C or Q, have singular values that are the
square roots of the Gram eigenvalues, so they are tested against
``sqrt(tol_rank)``.  Both kinds are equilibrated first (symmetric diagonal
scaling for Gram matrices, row scaling for design matrices) so that rows of
different derivative order, hence different physical units, compare fairly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL_RANK = 1e-10
TOL_RANGE = 1e-8

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class GramSolution:
    finite: bool
    value: float
    solution: np.ndarray | None
    certificate: np.ndarray | None
    rank: int


@dataclass(frozen=True)
class SystemSolution:
    consistent: bool
    x: np.ndarray | None
    witness: np.ndarray | None
    rank: int
    rank_augmented: int
    residual: float


def _inverse_scales(norms: np.ndarray) -> np.ndarray:
    return np.where(norms > _TINY, 1.0 / np.where(norms > _TINY, norms, 1.0), 1.0)


def numerical_rank(s: np.ndarray, rtol: float) -> int:
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def gram_range_solve(gram, rhs, tol_rank=TOL_RANK, tol_range=TOL_RANGE) -> GramSolution:
    """Maximise (a.rhs)^2 / (a.G.a) for a PSD matrix G.

    Finite exactly when rhs lies in range(G); the maximum is then rhs.G^+.rhs
    and ``solution`` solves G a = rhs.  Otherwise ``certificate`` is a null
    vector of G normalised to certificate.rhs = 1.
    """
    G = np.asarray(gram, dtype=float)
    G = 0.5 * (G + G.T)
    rhs = np.asarray(rhs, dtype=float)
    scale = _inverse_scales(np.sqrt(np.clip(np.diag(G), 0.0, None)))
    Gs = G * np.outer(scale, scale)
    U, s, _ = np.linalg.svd(Gs, hermitian=True)
    rank = numerical_rank(s, tol_rank)
    rs = scale * rhs
    Ur = U[:, :rank]
    coef = Ur.T @ rs
    resid = rs - Ur @ coef
    if np.linalg.norm(resid) <= tol_range * max(np.linalg.norm(rs), _TINY):
        a = scale * (Ur @ (coef / s[:rank]))
        return GramSolution(True, float(rhs @ a), a, None, rank)
    cert = scale * resid
    cert = cert / (rhs @ cert)
    return GramSolution(False, float("inf"), None, cert, rank)


def consistent_solve(A, b, tol_rank=TOL_RANK, tol_range=TOL_RANGE, metric_inv_sqrt=None) -> SystemSolution:
    """Rouche-Frobenius test and minimum-norm solve of ``A x = b``.

    ``metric_inv_sqrt`` is K = G^{-1/2} for a positive definite metric G; the
    returned x then minimises x.G.x among all solutions.  The rank of A uses
    threshold sqrt(tol_rank) (see module docstring); b counts as outside the
    range when the residual exceeds ``tol_range * |b|`` after row scaling.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    K = np.eye(A.shape[1]) if metric_inv_sqrt is None else np.asarray(metric_inv_sqrt, dtype=float)
    M = A @ K
    scale = _inverse_scales(np.linalg.norm(M, axis=1))
    Ms = M * scale[:, None]
    bs = b * scale
    U, s, Vh = np.linalg.svd(Ms, full_matrices=False)
    rank = numerical_rank(s, np.sqrt(tol_rank))
    Ur = U[:, :rank]
    coef = Ur.T @ bs
    resid = bs - Ur @ coef
    res_norm = float(np.linalg.norm(resid))
    if res_norm <= tol_range * max(float(np.linalg.norm(bs)), _TINY):
        x = K @ (Vh[:rank].T @ (coef / s[:rank]))
        return SystemSolution(True, x, None, rank, rank, res_norm)
    witness = scale * resid
    witness = witness / (witness @ b)
    return SystemSolution(False, None, witness, rank, rank + 1, res_norm)


def gram_rank(gram, tol_rank=TOL_RANK) -> int:
    G = np.asarray(gram, dtype=float)
    G = 0.5 * (G + G.T)
    scale = _inverse_scales(np.sqrt(np.clip(np.diag(G), 0.0, None)))
    s = np.linalg.svd(G * np.outer(scale, scale), compute_uv=False, hermitian=True)
    return numerical_rank(s, tol_rank)


def saturation_order(gram, tol_rank=TOL_RANK) -> int:
    """Smallest m whose leading m x m block already has the full rank of G."""
    G = np.asarray(gram, dtype=float)
    full = gram_rank(G, tol_rank)
    if full == 0:
        return 0
    for m in range(1, G.shape[0] + 1):
        if gram_rank(G[:m, :m], tol_rank) == full:
            return m
    return G.shape[0]


def effective_order(gram, value: float, tol_rank=TOL_RANK, tol_range=TOL_RANGE, rtol=1e-9) -> int:
    """Smallest leading block of G whose bound equals ``value``."""
    G = np.asarray(gram, dtype=float)
    n = G.shape[0]
    for m in range(1, n):
        lam = np.zeros(m)
        lam[0] = 1.0
        sub = gram_range_solve(G[:m, :m], lam, tol_rank, tol_range)
        if np.isinf(value):
            if not sub.finite:
                return m
        elif sub.finite and abs(sub.value - value) <= rtol * abs(value):
            return m
    return n
