"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from bhatt import scenarios
from bhatt.model import DerivativeOptions, evaluate_stack

QUBIT_LAMBDAS = (0.1, 0.25, 0.4)
QUBIT_THETAS = (0.05, 0.1, 0.2)


def corpus_stack(case, n: int):
    if case.quantum:
        return case.family.stack(case.theta0, n)
    return evaluate_stack(case.family, case.theta0, n, DerivativeOptions())


def rel_err(got, want) -> float:
    got, want = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
    return float(np.max(np.abs(got - want)) / max(np.max(np.abs(want)), np.finfo(float).tiny))


def qubit_stack(lam: float, theta: float, n: int):
    return scenarios.qubit_model(scenarios.QubitConfig(lam, theta)).stack(theta, n)


def random_density(rng: np.random.Generator, N: int, floor: float = 0.05) -> np.ndarray:
    """Full-rank density matrix with every eigenvalue above ``floor / N``."""
    G = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    rho = G @ G.conj().T
    rho /= np.trace(rho).real
    return (1 - floor) * rho + floor * np.eye(N) / N


def random_hermitian(rng: np.random.Generator, N: int, traceless: bool = True) -> np.ndarray:
    G = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    H = 0.5 * (G + G.conj().T)
    if traceless:
        H -= np.trace(H) / N * np.eye(N)
    return H
