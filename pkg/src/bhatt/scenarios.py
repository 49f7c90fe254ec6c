"""Worked models: twin-Fock Mach-Zehnder, the qubit theta^2 rotation, test fixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError
from .model import DiscreteModel, polynomial_model
from .quantum import DensityFamily

# ---------------------------------------------------------------------------
# Bessel functions of the first kind, integer order


def _bessel_series(qmax: int, x: float) -> np.ndarray:
    # J_q(x) = (x/2)^q / q! * sum_j (-x^2/4)^j / (j! (q+1)_j), fine for x < 1
    q = np.arange(qmax + 1, dtype=float)
    lead = np.exp(q * (math.log(x) - math.log(2.0)) - np.array([math.lgamma(v + 1.0) for v in q]))
    term = np.ones(qmax + 1)
    total = np.ones(qmax + 1)
    z = -x * x / 4.0
    for j in range(1, 30):
        term = term * z / (j * (q + j))
        total += term
    return lead * total


def bessel_j_orders(qmax: int, x: float) -> np.ndarray:
    """J_0(x) .. J_qmax(x) by Miller's backward recurrence.

    The recurrence J_{k-1} = (2k/x) J_k - J_{k+1} is run downward from an
    order well above max(qmax, x) and normalised with J_0 + 2 sum J_2k = 1.
    Arguments below 1 use the power series, where the recurrence's 2k/x
    factor would overflow.
    """
    if qmax < 0:
        raise ValueError("qmax must be non-negative")
    x = float(x)
    sign = 1.0
    if x < 0:
        x, sign = -x, -1.0
    out = np.zeros(qmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    if x < 1.0:
        out[:] = _bessel_series(qmax, x)
        if sign < 0:
            out[1::2] *= -1.0
        return out
    top = max(qmax, int(x))
    m = top + int(math.sqrt(160.0 * max(top, 1))) + 20
    m += m % 2
    vals = np.zeros(m + 2)
    vals[m] = 1e-300
    for k in range(m, 0, -1):
        vals[k - 1] = (2.0 * k / x) * vals[k] - vals[k + 1]
        if abs(vals[k - 1]) > 1e250:
            vals[k - 1 :] *= 1e-250
    norm = vals[0] + 2.0 * vals[2 : m + 1 : 2].sum()
    if norm == 0.0 or not math.isfinite(norm):
        raise ConvergenceError(f"normalisation sum failed for x={x}")
    out[:] = vals[: qmax + 1] / norm
    if sign < 0:
        out[1::2] *= -1.0
    return out


def bessel_j(q: int, x: float) -> float:
    """J_q(x) for integer q, with J_{-q} = (-1)^q J_q."""
    q = int(q)
    val = bessel_j_orders(abs(q), x)[abs(q)]
    return float(-val if q < 0 and q % 2 else val)


def _signed_orders(J: np.ndarray, orders: np.ndarray) -> np.ndarray:
    a = np.abs(orders)
    return np.where((orders < 0) & (a % 2 == 1), -J[a], J[a])


# ---------------------------------------------------------------------------
# Mach-Zehnder with |r, r> input in the small-angle Bessel approximation


@dataclass(frozen=True)
class MachZehnderConfig:
    r: int
    theta0: float
    tail_mass: float = 1e-12
    window_theta: float | None = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be a positive integer")
        if not self.theta0 > 0:
            raise ValueError("theta0 must be positive")

    @property
    def in_tested_regime(self) -> bool:
        """False once r*theta0 exceeds 50 or theta0 is not small."""
        return self.r * self.theta0 <= 50 and self.theta0 < 0.1


def mz_window(r: int, theta: float, tail_mass: float) -> int:
    """Largest |q| kept so the excluded Bessel tail mass is <= tail_mass."""
    x = r * theta
    qmax = math.ceil(x) + max(20, math.ceil(3.0 * x ** (1.0 / 3.0) + 10))
    p = bessel_j_orders(qmax, x) ** 2
    # tail[Q] = mass with |q| > Q, both signs
    tail = 2.0 * np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    ok = np.flatnonzero(tail <= tail_mass)
    return int(ok[0]) if ok.size else qmax


def _mz_derivative(r: int, Q: int, theta: float, k: int) -> np.ndarray:
    q = np.arange(-Q, Q + 1)
    J = bessel_j_orders(Q + k + 1, r * theta)

    def dJ(m):
        # d^m J_q / dx^m = 2^-m sum_j (-1)^j C(m, j) J_{q - m + 2j}
        acc = np.zeros(q.size)
        for j in range(m + 1):
            acc += (-1) ** j * math.comb(m, j) * _signed_orders(J, q - m + 2 * j)
        return acc / 2.0**m

    derivs = [dJ(m) for m in range(k + 1)]
    total = sum(math.comb(k, m) * derivs[m] * derivs[k - m] for m in range(k + 1))
    return float(r) ** k * total


def mach_zehnder_model(cfg: MachZehnderConfig) -> DiscreteModel:
    """P_theta(2q) = J_q(r theta)^2 over a fixed window of q.

    The window is sized at ``cfg.window_theta`` (default theta0) so one
    discrete family serves a whole parameter scan.
    """
    wtheta = cfg.window_theta if cfg.window_theta is not None else cfg.theta0
    Q = mz_window(cfg.r, wtheta, cfg.tail_mass)
    labels = tuple(2 * q for q in range(-Q, Q + 1))

    def prob(theta):
        return _mz_derivative(cfg.r, Q, theta, 0)

    def derivs(theta, k):
        return _mz_derivative(cfg.r, Q, theta, k)

    return DiscreteModel(labels, prob, (0.0, math.pi), derivs, f"mach-zehnder r={cfg.r}", cfg.tail_mass)


# ---------------------------------------------------------------------------
# Qubit rotated by exp(-i theta^2 sigma_x)


@dataclass(frozen=True)
class QubitConfig:
    lam: float
    theta0: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")


@lru_cache(maxsize=None)
def _phase_poly(k: int) -> np.polynomial.Polynomial:
    # d^k/dtheta^k exp(2i theta^2) = p_k(theta) exp(2i theta^2)
    p = np.polynomial.Polynomial([1.0 + 0j])
    grow = np.polynomial.Polynomial([0.0, 4j])
    for _ in range(k):
        p = p.deriv() + grow * p
    return p


def _cos_sin_derivs(theta: float, k: int) -> tuple[float, float]:
    z = _phase_poly(k)(theta) * np.exp(2j * theta * theta)
    return float(z.real), float(z.imag)


def qubit_rho(lam: float, theta: float, k: int = 0) -> np.ndarray:
    """k-th theta-derivative of rho(theta) = U rho(0) U^dag."""
    mu = lam - 0.5
    c, s = _cos_sin_derivs(theta, k)
    shift = 0.5 if k == 0 else 0.0
    return np.array([[mu * c + shift, 1j * mu * s], [-1j * mu * s, shift - mu * c]])


def qubit_model(cfg: QubitConfig) -> DensityFamily:
    return DensityFamily(
        2,
        lambda theta: qubit_rho(cfg.lam, theta),
        lambda theta, k: qubit_rho(cfg.lam, theta, k),
        f"qubit lambda={cfg.lam}",
    )


def qubit_q_closed_form(lam: float, theta: float) -> np.ndarray:
    g = 16.0 * (1.0 - 2.0 * lam) ** 2
    v = (lam - 1.0) * lam
    return np.array([[g * theta**2, g * theta], [g * theta, g * (v - 4.0 * theta**4) / v]])


# ---------------------------------------------------------------------------
# Fixtures


def bernoulli() -> DiscreteModel:
    return polynomial_model([[0.0, 1.0], [1.0, -1.0]], (0.0, 1.0), name="bernoulli")


def quadratic_two_point() -> DiscreteModel:
    return polynomial_model([[0.0, 0.0, 1.0], [1.0, 0.0, -1.0]], (0.0, 1.0), name="quad2")


def binomial(m: int) -> DiscreteModel:
    """Binomial(m, theta) counted by successes, highest count first."""
    coeffs = []
    for j in range(m, -1, -1):
        # C(m, j) theta^j (1 - theta)^(m - j)
        p = math.comb(m, j) * np.polynomial.Polynomial([0.0, 1.0]) ** j * np.polynomial.Polynomial([1.0, -1.0]) ** (m - j)
        coeffs.append(p.coef)
    return polynomial_model(coeffs, (0.0, 1.0), name=f"binomial{m}")


def zero_score_cubic() -> DiscreteModel:
    edge = 0.5 ** (1.0 / 3.0)
    return polynomial_model([[0.5, 0.0, 0.0, 1.0], [0.5, 0.0, 0.0, -1.0]], (-edge, edge), name="cubic")


def flat_second_three_point() -> DiscreteModel:
    """(1/3 + t, 1/3 + t^3, 1/3 - t - t^3): zero second derivative at 0."""
    third = 1.0 / 3.0
    return polynomial_model(
        [[third, 1.0], [third, 0.0, 0.0, 1.0], [third, -1.0, 0.0, -1.0]], (-0.3, 0.3), name="skip2"
    )


def diagonal_family(model: DiscreteModel) -> DensityFamily:
    """Commuting family rho(theta) = diag(P_theta)."""
    derivs = None
    if model.analytic_derivs is not None:
        derivs = lambda theta, k: np.diag(model.analytic_derivs(theta, k)).astype(complex)  # noqa: E731
    return DensityFamily(model.size, lambda theta: np.diag(model.prob(theta)).astype(complex), derivs, f"diag-{model.name}")


def phase_qutrit() -> DensityFamily:
    """exp(-i theta H) rho0 exp(i theta H) with H = diag(0, 1, 3)."""
    energies = np.array([0.0, 1.0, 3.0])
    rho0 = np.array([[0.5, 0.1, 0.05j], [0.1, 0.3, 0.08], [-0.05j, 0.08, 0.2]], dtype=complex)
    gaps = energies[:, None] - energies[None, :]

    def deriv(theta, k):
        return rho0 * np.exp(-1j * theta * gaps) * (-1j * gaps) ** k

    return DensityFamily(3, lambda theta: deriv(theta, 0), deriv, "phase-qutrit")


@dataclass(frozen=True)
class CorpusCase:
    name: str
    family: DiscreteModel | DensityFamily
    theta0: float

    @property
    def quantum(self) -> bool:
        return isinstance(self.family, DensityFamily)


def synthetic_corpus() -> list[CorpusCase]:
    return [
        CorpusCase("bernoulli@0.5", bernoulli(), 0.5),
        CorpusCase("bernoulli@0.3", bernoulli(), 0.3),
        CorpusCase("quad2@0.6", quadratic_two_point(), 0.6),
        CorpusCase("binomial2@0.5", binomial(2), 0.5),
        CorpusCase("binomial2@0.3", binomial(2), 0.3),
        CorpusCase("binomial3@0.4", binomial(3), 0.4),
        CorpusCase("cubic@0", zero_score_cubic(), 0.0),
        CorpusCase("skip2@0", flat_second_three_point(), 0.0),
        CorpusCase("qubit(0.25)@0.1", qubit_model(QubitConfig(0.25, 0.1)), 0.1),
        CorpusCase("qubit(0.1)@0.2", qubit_model(QubitConfig(0.1, 0.2)), 0.2),
        CorpusCase("qubit(0.4)@0.05", qubit_model(QubitConfig(0.4, 0.05)), 0.05),
        CorpusCase("qubit(0.5)@0.1", qubit_model(QubitConfig(0.5, 0.1)), 0.1),
        CorpusCase("qubit(0.25)@0", qubit_model(QubitConfig(0.25, 0.0)), 0.0),
        CorpusCase("diag-bernoulli@0.3", diagonal_family(bernoulli()), 0.3),
        CorpusCase("diag-binomial2@0.3", diagonal_family(binomial(2)), 0.3),
        CorpusCase("diag-quad2@0.6", diagonal_family(quadratic_two_point()), 0.6),
        CorpusCase("phase-qutrit@0.2", phase_qutrit(), 0.2),
    ]
