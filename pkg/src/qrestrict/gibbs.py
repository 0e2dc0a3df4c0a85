"""Finite-volume Gibbs and ground states and their classical restrictions."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import CapabilityError, DomainError, NumericalFailure
from .lanczos import lowest_eigenpair
from .spin_algebra import DENSE_LIMIT, Lattice, ObservableSpectrum, is_hermitian, to_dense

CLAMP_TOL = 1e-10
SUM_TOL = 1e-10


@dataclass(frozen=True)
class QuantumState:
    """Thermal density matrix or ground-state vector on a lattice.

    ``log_partition`` is ``log Tr exp(-beta H)`` for thermal states and
    ``None`` for ground states.
    """

    kind: str
    lattice: Lattice
    beta: float | None = None
    density: np.ndarray | None = None
    vector: np.ndarray | None = None
    energy: float | None = None
    log_partition: float | None = None
    degenerate: bool = False
    residual: float = 0.0

    @property
    def partition(self) -> float:
        return math.exp(self.log_partition)

    @property
    def dim(self) -> int:
        return self.lattice.dim


def _lattice_for(dim: int, lattice: Lattice | None) -> Lattice:
    if lattice is None:
        n = round(math.log2(dim)) if dim > 1 else 0
        if 2**n != dim:
            raise DomainError("pass a lattice for non-qubit dimensions")
        lattice = Lattice.chain(n)
    if lattice.dim != dim:
        raise DomainError(f"operator dim {dim} does not match lattice dim {lattice.dim}")
    return lattice


def _check_hermitian(H):
    if not is_hermitian(H):
        raise DomainError("Hamiltonian is not Hermitian")


def gibbs_state(H, beta: float, lattice: Lattice | None = None) -> QuantumState:
    """``exp(-beta H) / Tr exp(-beta H)`` by full eigendecomposition."""
    dim = H.shape[0]
    if dim > DENSE_LIMIT:
        raise CapabilityError(f"dim {dim} exceeds dense limit {DENSE_LIMIT}; use ground_state")
    if beta < 0 or not np.isfinite(beta):
        raise DomainError("beta must be finite and >= 0")
    _check_hermitian(H)
    lattice = _lattice_for(dim, lattice)
    Hd = to_dense(H)
    w, v = np.linalg.eigh(0.5 * (Hd + Hd.conj().T))
    logw = -beta * w
    logz = float(logsumexp(logw))
    p = np.exp(logw - logz)
    rho = (v * p) @ v.conj().T
    return QuantumState("thermal", lattice, beta=float(beta), density=rho, log_partition=logz)


def operator_norm(H) -> float:
    """Spectral norm for dense input, max absolute row sum bound for sparse."""
    if sp.issparse(H):
        return float(abs(H).sum(axis=1).max()) if H.nnz else 0.0
    return float(np.linalg.norm(to_dense(H), 2))


def ground_state(H, method: str = "auto", seed: int = 0, lattice: Lattice | None = None) -> QuantumState:
    """Lowest eigenvector; ``method`` is ``dense``, ``iterative`` or ``auto``."""
    dim = H.shape[0]
    _check_hermitian(H)
    lattice = _lattice_for(dim, lattice)
    if method == "auto":
        method = "dense" if dim <= DENSE_LIMIT else "iterative"
    if method == "dense":
        if dim > DENSE_LIMIT:
            raise CapabilityError(f"dim {dim} exceeds dense limit {DENSE_LIMIT}")
        Hd = to_dense(H)
        w, v = np.linalg.eigh(0.5 * (Hd + Hd.conj().T))
        norm = float(np.max(np.abs(w)))
        vec = v[:, 0]
        vec = _fix_phase(vec)
        gap = w[1] - w[0] if dim > 1 else np.inf
        res = float(np.linalg.norm(Hd @ vec - w[0] * vec))
        return QuantumState("ground", lattice, vector=vec, energy=float(w[0]),
                            degenerate=bool(gap < 1e-8 * norm), residual=res)
    if method != "iterative":
        raise DomainError(f"unknown method {method!r}")
    Hs = sp.csr_matrix(H)
    if Hs.nnz and np.abs(Hs.data.imag).max() == 0:
        Hs = sp.csr_matrix(Hs.real)
    dtype = Hs.dtype if Hs.nnz else float
    norm = operator_norm(Hs)
    first = lowest_eigenpair(Hs.dot, dim, norm=norm, seed=seed, dtype=dtype)
    if not first.converged:
        raise NumericalFailure(f"Lanczos did not converge (residual {first.residual:.3e})")
    degenerate = False
    if dim > 1:
        second = lowest_eigenpair(Hs.dot, dim, norm=norm, seed=seed + 1, dtype=dtype, deflate=[first.vector])
        degenerate = bool(second.value - first.value < 1e-8 * norm)
    vec = _fix_phase(first.vector.astype(complex))
    return QuantumState("ground", lattice, vector=vec, energy=first.value,
                        degenerate=degenerate, residual=first.residual)


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude amplitude real positive (deterministic gauge)."""
    i = int(np.argmax(np.abs(vec)))
    return vec * (abs(vec[i]) / vec[i])


@dataclass(frozen=True)
class ClassicalDistribution:
    """Probability table over ``sp(X)^W``.

    ``probs`` has one axis per window site, indexed by eigenvalue index.
    """

    window: tuple[int, ...]
    values: np.ndarray
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.min(initial=0.0) < -CLAMP_TOL:
            raise NumericalFailure(f"negative probability {p.min():.3e}")
        p = np.where(p < 0, 0.0, p)
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise NumericalFailure(f"probabilities sum to {p.sum():.15g}")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "window", tuple(int(s) for s in self.window))

    def _indices(self, config) -> tuple[int, ...]:
        if isinstance(config, Mapping):
            config = [config[s] for s in self.window]
        if len(config) != len(self.window):
            raise DomainError("configuration length does not match window")
        out = []
        for x in config:
            d = np.abs(self.values - float(x))
            i = int(np.argmin(d))
            if d[i] > 1e-9 * max(1.0, np.abs(self.values).max()):
                raise DomainError(f"value {x} not in spectrum")
            out.append(i)
        return tuple(out)

    def prob(self, config) -> float:
        return float(self.probs[self._indices(config)])

    def marginal(self, sites: Sequence[int]) -> "ClassicalDistribution":
        axes = [self.window.index(s) for s in sites]
        drop = tuple(i for i in range(len(self.window)) if i not in axes)
        p = self.probs.sum(axis=drop) if drop else self.probs
        # reorder the surviving axes to the requested site order
        kept = [i for i in range(len(self.window)) if i in axes]
        p = np.transpose(p, [kept.index(a) for a in axes]) if axes else p
        return ClassicalDistribution(tuple(sites), self.values, p)

    def items(self):
        for idx in itertools.product(range(len(self.values)), repeat=len(self.window)):
            yield tuple(float(self.values[i]) for i in idx), float(self.probs[idx])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{s}" for s in self.window] + ["prob"])
        for conf, p in self.items():
            w.writerow([format_float(x) for x in conf] + [format_float(p)])
        return buf.getvalue()


def format_float(x: float) -> str:
    """17 significant digits, with negative zero normalized."""
    x = float(x)
    if x == 0.0:
        x = 0.0
    return format(x, ".17g")


def _group_labels(p: np.ndarray, axes: Sequence[int], spec: ObservableSpectrum) -> np.ndarray:
    """Sum eigenvector columns sharing an eigenvalue along the given axes."""
    starts = np.flatnonzero(np.r_[True, np.diff(spec.labels) != 0])
    for ax in axes:
        p = np.add.reduceat(p, starts, axis=ax)
    return p


def _window_positions(lattice: Lattice, W: Sequence[int]) -> list[int]:
    pos = [lattice.index(s) for s in W]
    if len(set(pos)) != len(pos):
        raise DomainError("window has repeated sites")
    return pos


def vector_restriction(vec: np.ndarray, n: int, spec: ObservableSpectrum, positions: Sequence[int]) -> np.ndarray:
    """Restriction table of a state vector on the given tensor positions."""
    m = spec.m
    psi = np.asarray(vec).reshape((m,) * n)
    U = spec.basis.conj().T
    if not spec.is_diagonal:
        for ax in positions:
            psi = np.moveaxis(np.tensordot(U, psi, axes=([1], [ax])), 0, ax)
    prob = np.abs(psi) ** 2
    if spec.is_diagonal:
        # eigenvector columns are permuted basis states
        perm = np.argmax(np.abs(spec.basis), axis=0)
        for ax in positions:
            prob = np.take(prob, perm, axis=ax)
    rest = tuple(i for i in range(n) if i not in positions)
    prob = prob.sum(axis=rest) if rest else prob
    kept = sorted(positions)
    prob = np.transpose(prob, [kept.index(p) for p in positions])
    return _group_labels(prob, range(len(positions)), spec)


def density_restriction(rho: np.ndarray, n: int, spec: ObservableSpectrum, positions: Sequence[int]) -> np.ndarray:
    m = spec.m
    k = len(positions)
    rest = [i for i in range(n) if i not in positions]
    t = np.asarray(rho).reshape((m,) * (2 * n))
    order = list(positions) + rest
    t = np.transpose(t, order + [n + i for i in order])
    dw, dr = m**k, m ** len(rest)
    red = np.einsum("iaja->ij", t.reshape(dw, dr, dw, dr))
    Uw = np.ones((1, 1), dtype=complex)
    for _ in range(k):
        Uw = np.kron(Uw, spec.basis)
    diag = np.real(np.einsum("ji,jk,ki->i", Uw.conj(), red, Uw))
    return _group_labels(diag.reshape((m,) * k), range(k), spec)


def classical_restriction(state: QuantumState, spec: ObservableSpectrum, W: Sequence[int]) -> ClassicalDistribution:
    """``mu^X(x_W) = omega(Q_W(x_W))`` as a probability table."""
    lat = state.lattice
    if spec.m != lat.m:
        raise DomainError("observable dimension does not match lattice")
    if len(W) > lat.size:
        raise DomainError("window exceeds lattice")
    pos = _window_positions(lat, W)
    if state.kind == "ground":
        table = vector_restriction(state.vector, lat.size, spec, pos)
    else:
        table = density_restriction(state.density, lat.size, spec, pos)
    return ClassicalDistribution(tuple(W), spec.eigenvalues.copy(), table)


def magnetization_distribution(
    state: QuantumState,
    F: Callable[[float], float],
    spec: ObservableSpectrum,
    sites: Sequence[int],
    decimals: int = 12,
) -> dict[float, float]:
    """Law of ``(1/|L|) sum_i F(x_i)`` under the classical restriction."""
    if spec.count ** len(sites) > 2**20:
        raise CapabilityError("too many configurations for enumeration")
    mu = classical_restriction(state, spec, sites)
    fvals = np.array([F(float(x)) for x in spec.eigenvalues], dtype=float)
    grids = np.indices(mu.probs.shape).reshape(len(sites), -1)
    avg = fvals[grids].mean(axis=0) if len(sites) else np.zeros(1)
    keys = np.round(avg, decimals) + 0.0
    out: dict[float, float] = {}
    for key, p in zip(keys, mu.probs.ravel()):
        out[float(key)] = out.get(float(key), 0.0) + float(p)
    return dict(sorted(out.items()))
