import math

import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad

from qrestrict.errors import DomainError
from qrestrict.ising_exact import (
    IsingParams,
    bogoliubov_angle,
    log_toeplitz_generating,
    magnetization,
    pair_correlation,
    rate_function,
    symbol_phi,
    szego_constant,
    szego_F,
    szego_F_derivative,
    toeplitz_generating,
)
from qrestrict.quadrature import QuadratureRule

Q = QuadratureRule.trapezoid(4096)
G2 = IsingParams(2.0)


def test_singular_parameters():
    with pytest.raises(DomainError):
        IsingParams(1.0)
    with pytest.raises(DomainError):
        IsingParams(0.5)
    with pytest.raises(DomainError):
        IsingParams(2.0, J=0)


def test_quadrature_rules():
    assert Q.weights.sum() == pytest.approx(2 * math.pi)
    assert math.pi in Q.nodes
    gl = QuadratureRule.gauss_legendre(64)
    assert gl.mean(np.cos(gl.nodes) ** 2) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("k,theta", [(0.0, math.pi), (math.pi, math.pi), (math.pi / 2, math.pi - math.atan(0.5))])
def test_bogoliubov_angle(k, theta):
    assert float(bogoliubov_angle(k, G2)) == pytest.approx(theta, abs=1e-12)
    assert theta == pytest.approx(2.67795, abs=1e-5) or k != math.pi / 2


def test_symbol_values():
    ks = np.linspace(-3, 3, 7)
    assert np.allclose(symbol_phi(0.0, ks, G2), 1)
    t = 0.7
    assert complex(symbol_phi(t, 0.0, G2)) == pytest.approx(math.exp(t), abs=1e-14)
    assert abs(complex(symbol_phi(0.5, 1.0, IsingParams(100.0))) - math.exp(0.5)) < 2e-2


def test_symbol_conjugate_symmetry():
    ks = np.linspace(0.1, 3.0, 11)
    assert np.allclose(symbol_phi(0.4, -ks, G2), np.conj(symbol_phi(0.4, ks, G2)))


def test_pair_correlation_basics():
    d = np.arange(-3, 4)
    c = pair_correlation(d, 0.0, G2, Q)
    assert np.allclose(c, (d == 0).astype(float), atol=1e-14)
    mags = np.abs(pair_correlation(np.arange(1, 7), 0.3, G2, Q))
    assert np.all(mags[1:] / mags[:-1] < 1)


def test_generating_function_trivial_and_n1():
    assert toeplitz_generating(5, 0.0, G2, Q) == pytest.approx(1.0, abs=1e-12)
    mz, _ = scipy_quad(lambda k: (2 + math.cos(k)) / math.sqrt(5 + 4 * math.cos(k)), -math.pi, math.pi)
    mz /= 2 * math.pi
    assert magnetization(G2, Q) == pytest.approx(mz, abs=1e-12)
    expect = math.cosh(0.5) + math.sinh(0.5) * mz
    assert toeplitz_generating(1, 0.5, G2, Q) == pytest.approx(expect, abs=1e-12)


def test_quadrature_count_guard():
    with pytest.raises(DomainError):
        toeplitz_generating(64, 0.5, G2, QuadratureRule.trapezoid(256))


def test_szego_values():
    assert szego_F(0.0, G2, Q) == 0.0
    assert abs(szego_F(0.5, IsingParams(100.0), Q) - 0.5) <= 1e-3


def test_strong_szego_asymptotics():
    F = szego_F(0.5, G2, Q)
    E = szego_constant(0.5, G2, Q)
    for n in (16, 32, 64):
        assert log_toeplitz_generating(n, 0.5, G2, Q) - n * F - E == pytest.approx(0, abs=1e-10)


def test_F_derivative_matches_finite_difference():
    h = 1e-5
    for t in (-1.0, 0.3, 1.5):
        fd = (szego_F(t + h, G2, Q) - szego_F(t - h, G2, Q)) / (2 * h)
        assert szego_F_derivative(t, G2, Q) == pytest.approx(fd, abs=1e-8)


def test_negative_g_branch():
    p = IsingParams(-2.0)
    assert magnetization(p, Q) == pytest.approx(-magnetization(G2, Q), abs=1e-12)
    assert math.isfinite(szego_F(0.5, p, Q))


def test_rate_function_properties():
    m0 = magnetization(G2, Q)
    assert rate_function(m0, G2, Q).value <= 1e-8
    grid = [-0.5, 0.0, 0.5, 0.9]
    vals = [rate_function(m, G2, Q).value for m in grid]
    assert min(vals) >= 0
    # uneven grid: check convexity through slopes
    slopes = np.diff(vals) / np.diff(grid)
    assert np.all(np.diff(slopes) >= -1e-8)


def test_rate_function_near_saturation():
    p = IsingParams(100.0)
    m0 = magnetization(p, Q)
    assert abs(m0 - 1) < 1e-3
    assert rate_function(0.999, p, Q).value < 1e-2
    assert rate_function(1.0, p, Q).at_boundary


def test_rate_domain():
    with pytest.raises(DomainError):
        rate_function(1.5, G2, Q)
