"""Free-fermion formulas for the transverse-field Ising ground state.

``H = -J sum sx_i sx_{i+1} - h sum sz_i`` with ``g = h/J`` and ``|g| > 1``.
The generating function ``<exp(t sum_{j<=n} sz_j)>`` is the determinant of
an ``n x n`` Toeplitz matrix with symbol

    phi_t(k) = cosh t - sinh t exp(-i theta_k),
    exp(i theta_k) = -(g + exp(-ik)) / |g + exp(-ik)|,

whose mean is ``<exp(t sz)>`` with positive magnetization for ``g > 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import DomainError, NumericalFailure
from .quadrature import QuadratureRule

T_BRACKET = 40.0
GOLDEN_TOL = 1e-10


@dataclass(frozen=True)
class IsingParams:
    g_ratio: float
    J: float = 1.0

    def __post_init__(self):
        if not self.J > 0:
            raise DomainError("J must be > 0")
        if not abs(self.g_ratio) > 1:
            raise DomainError(f"|g| = {abs(self.g_ratio)} must exceed 1 (singular or ordered regime)")

    @property
    def h(self) -> float:
        return self.g_ratio * self.J


def _z(k, p: IsingParams):
    k = np.asarray(k, dtype=float)
    # sin(pi) is 1.2e-16 in floating point; the symbol is real there
    s = np.where(np.abs(np.abs(k) - np.pi) < 1e-14, 0.0, np.sin(k))
    return p.g_ratio + np.cos(k) + 1j * s


def bogoliubov_angle(k, p: IsingParams):
    """Continuous branch of ``theta_k``.

    For ``g > 1`` this is ``pi + arg(g + e^{-ik})``, in ``(pi/2, 3pi/2)``;
    for ``g < -1`` it is ``arg(-(g + e^{-ik}))``, in ``(-pi/2, pi/2)``.
    """
    zc = np.conj(_z(k, p))
    if p.g_ratio > 0:
        return np.pi + np.angle(zc)
    return np.angle(-zc)


def _one_pm_c(k, p: IsingParams):
    """``(1 - c, 1 + c)`` with ``c = exp(-i theta_k)``, free of cancellation."""
    z = _z(k, p)
    r = np.abs(z)
    im = z.imag
    if p.g_ratio > 0:
        small = im**2 / (r + z.real)  # r - Re z
        return (r + z) / r, (small - 1j * im) / r
    small = im**2 / (r - z.real)  # r + Re z
    return (small + 1j * im) / r, (r - z) / r


def symbol_phi(t: float, k, p: IsingParams):
    """``phi_t(k)``; equals ``(e^t (1-c) + e^{-t} (1+c)) / 2``."""
    if t == 0:
        return np.ones_like(np.asarray(k, dtype=float), dtype=complex)
    minus, plus = _one_pm_c(k, p)
    return 0.5 * (math.exp(t) * minus + math.exp(-t) * plus)


def pair_correlation(d, t: float, p: IsingParams, quad: QuadratureRule):
    """Fourier coefficient ``(1/2pi) int phi_t(k) e^{-ikd} dk``."""
    d = np.asarray(d)
    phi = symbol_phi(t, quad.nodes, p)
    phase = np.exp(-1j * np.multiply.outer(d, quad.nodes))
    return quad.mean(phase * phi)


def toeplitz_matrix(n: int, t: float, p: IsingParams, quad: QuadratureRule) -> np.ndarray:
    """``M[j, j'] = phi_hat(j - j')``."""
    if n < 1:
        raise DomainError("n must be positive")
    if quad.count < 8 * n:
        raise DomainError(f"quadrature count {quad.count} < 8n = {8 * n}")
    coeffs = pair_correlation(np.arange(-(n - 1), n), t, p, quad)
    col = coeffs[n - 1:]
    row = coeffs[n - 1::-1]
    return toeplitz(col, row)


def log_toeplitz_generating(n: int, t: float, p: IsingParams, quad: QuadratureRule) -> float:
    """``log det M_n^t`` with reality and positivity checks."""
    M = toeplitz_matrix(n, t, p, quad)
    if np.abs(M.imag).max() > 1e-10 * max(1.0, np.abs(M).max()):
        raise NumericalFailure("Toeplitz entries are not real")
    sign, logdet = np.linalg.slogdet(M.real)
    if sign <= 0:
        raise NumericalFailure(f"non-positive Toeplitz determinant (sign {sign})")
    return float(logdet)


def toeplitz_generating(n: int, t: float, p: IsingParams, quad: QuadratureRule) -> float:
    """``G^n(t) = det M_n^t``."""
    return math.exp(log_toeplitz_generating(n, t, p, quad))


def szego_F(t: float, p: IsingParams, quad: QuadratureRule) -> float:
    """Mean of ``log phi_t`` over the circle."""
    if t == 0:
        return 0.0
    phi = symbol_phi(t, quad.nodes, p)
    if np.any(phi.real <= 0):
        raise NumericalFailure("Re phi_t <= 0 at a quadrature node; log branch ambiguous")
    logphi = np.log(phi)
    val = quad.mean(logphi)
    # the imaginary part cancels by phi(-k) = conj(phi(k)); allow roundoff only
    if abs(val.imag) > 1e-12 * max(1.0, float(np.abs(logphi).max())):
        raise NumericalFailure(f"Szego limit has imaginary part {val.imag:.3e}")
    return float(val.real)


def szego_constant(t: float, p: IsingParams, quad: QuadratureRule, terms: int = 200) -> float:
    """Second-order constant ``E = sum_{k>=1} k s_k s_{-k}`` of the strong limit.

    ``s_k`` are the Fourier coefficients of ``log phi_t``, so that
    ``log det M_n^t = n F(t) + E + o(1)``.
    """
    if t == 0:
        return 0.0
    logphi = np.log(symbol_phi(t, quad.nodes, p))
    k = np.arange(1, min(terms, quad.count // 2))
    s_plus = quad.mean(np.exp(-1j * np.multiply.outer(k, quad.nodes)) * logphi)
    s_minus = quad.mean(np.exp(1j * np.multiply.outer(k, quad.nodes)) * logphi)
    return float(np.real(np.sum(k * s_plus * s_minus)))


def szego_F_derivative(t: float, p: IsingParams, quad: QuadratureRule) -> float:
    """``F'(t)``; at ``t = 0`` this is the mean magnetization."""
    minus, plus = _one_pm_c(quad.nodes, p)
    et, emt = math.exp(t), math.exp(-t)
    val = quad.mean((et * minus - emt * plus) / (et * minus + emt * plus))
    return float(val.real)


def magnetization(p: IsingParams, quad: QuadratureRule) -> float:
    """``<sz>`` in the infinite chain."""
    return szego_F_derivative(0.0, p, quad)


@dataclass(frozen=True)
class RateValue:
    value: float
    t_star: float
    at_boundary: bool


def rate_function(m: float, p: IsingParams, quad: QuadratureRule) -> RateValue:
    """``I(m) = sup_t (t m - F(t))`` by golden section on ``[-40, 40]``."""
    if not -1.0 <= m <= 1.0:
        raise DomainError(f"m = {m} outside [-1, 1]")

    def objective(t):
        return t * m - szego_F(t, p, quad)

    lo, hi = -T_BRACKET, T_BRACKET
    inv = (math.sqrt(5) - 1) / 2
    a = hi - inv * (hi - lo)
    b = lo + inv * (hi - lo)
    fa, fb = objective(a), objective(b)
    while hi - lo > GOLDEN_TOL:
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + inv * (hi - lo)
            fb = objective(b)
        else:
            hi, b, fb = b, a, fa
            a = hi - inv * (hi - lo)
            fa = objective(a)
    t_star = 0.5 * (lo + hi)
    value = objective(t_star)
    # the Legendre touch point t = 0 bounds the supremum from below
    if value < 0.0:
        value, t_star = 0.0, 0.0
    # at |m| = 1 the supremum is only approached as |t| grows
    boundary = T_BRACKET - abs(t_star) < 1e-6 or abs(m) == 1.0
    return RateValue(float(value), float(t_star), bool(boundary))
