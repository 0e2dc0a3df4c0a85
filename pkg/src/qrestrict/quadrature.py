"""Quadrature rules on the circle (-pi, pi]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights with ``sum(weights) == 2 pi``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return len(self.nodes)

    @classmethod
    def trapezoid(cls, count: int = 4096) -> "QuadratureRule":
        """Uniform rule; exact for trigonometric polynomials of degree < count."""
        if count < 1:
            raise DomainError("quadrature count must be positive")
        # integer grid so that -k is exactly a node whenever k is
        j = np.arange(count // 2 - count + 1, count // 2 + 1)
        nodes = (2 * np.pi / count) * j
        return cls(nodes, np.full(count, 2 * np.pi / count))

    @classmethod
    def gauss_legendre(cls, count: int) -> "QuadratureRule":
        if count < 1:
            raise DomainError("quadrature count must be positive")
        x, w = np.polynomial.legendre.leggauss(count)
        return cls(np.pi * x, np.pi * w)

    def integrate(self, values) -> complex:
        return np.dot(self.weights, values)

    def mean(self, values):
        """``(1/2pi) * integral`` of sampled values (last axis = nodes)."""
        return np.asarray(values) @ self.weights / (2 * np.pi)
