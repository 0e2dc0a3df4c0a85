"""Many-body operators on tensor-product spin spaces.

Operators are plain ``numpy.ndarray`` objects up to ``DENSE_LIMIT`` and
``scipy.sparse.csr_matrix`` above it.  Basis order is the order of the
lattice site list with the local state ``|up>`` (sigma^z = +1) first.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError

DENSE_LIMIT = 4096
HERMITIAN_RTOL = 1e-12
CLUSTER_RTOL = 1e-9

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

PAULI = {"sx": SIGMA_X, "sy": SIGMA_Y, "sz": SIGMA_Z}


def to_dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op)


def is_hermitian(op, rtol: float = HERMITIAN_RTOL) -> bool:
    """Entrywise check ``max|A - A^H| <= rtol * max|A|``."""
    if sp.issparse(op):
        scale = abs(op).max() if op.nnz else 0.0
        diff = op - op.conj().T
        err = abs(diff).max() if diff.nnz else 0.0
    else:
        a = np.asarray(op)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            return False
        scale = np.abs(a).max() if a.size else 0.0
        err = np.abs(a - a.conj().T).max() if a.size else 0.0
    return bool(err <= rtol * scale)


def operator_to_json(op) -> dict:
    """Triplet dump ``{dim, triplets: [[row, col, re, im], ...]}``."""
    coo = sp.coo_matrix(op)
    coo.sum_duplicates()
    order = np.lexsort((coo.col, coo.row))
    trip = [
        [int(coo.row[k]), int(coo.col[k]), float(np.real(coo.data[k])), float(np.imag(coo.data[k]))]
        for k in order
        if coo.data[k] != 0
    ]
    return {"dim": int(coo.shape[0]), "triplets": trip}


def operator_from_json(obj: Mapping) -> np.ndarray | sp.csr_matrix:
    dim = int(obj["dim"])
    trip = obj.get("triplets", [])
    rows = [int(t[0]) for t in trip]
    cols = [int(t[1]) for t in trip]
    vals = [complex(t[2], t[3]) for t in trip]
    m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex).tocsr()
    return m.toarray() if dim <= DENSE_LIMIT else m


@dataclass(frozen=True)
class Lattice:
    """Ordered list of integer site coordinates with local dimension ``m``."""

    sites: tuple[int, ...]
    m: int = 2

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if len(set(sites)) != len(sites):
            raise DomainError("lattice sites must be distinct")
        if self.m < 2:
            raise DomainError("local dimension m must be >= 2")

    @classmethod
    def chain(cls, n: int, m: int = 2, start: int = 0) -> "Lattice":
        return cls(tuple(range(start, start + n)), m)

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return self.m ** len(self.sites)

    def index(self, site: int) -> int:
        try:
            return self.sites.index(int(site))
        except ValueError:
            raise DomainError(f"site {site} not in lattice") from None

    def __contains__(self, site) -> bool:
        return int(site) in self.sites


def _canonical_offsets(offsets: Sequence[int]) -> tuple[int, ...]:
    offs = sorted(int(o) for o in offsets)
    if not offs:
        raise DomainError("interaction term on the empty set")
    if len(set(offs)) != len(offs):
        raise DomainError(f"repeated offsets {offsets}")
    base = offs[0]
    offs = tuple(o - base for o in offs)
    if offs != tuple(range(len(offs))):
        raise DomainError(f"offset set {offsets} is not connected")
    return offs


@dataclass(frozen=True)
class Interaction:
    """Translation-invariant interaction keyed by canonical offset tuples.

    ``terms[(0, 1)]`` is the operator acting on sites ``(s, s+1)`` for
    every translate ``s``; the first offset is the leading tensor factor.
    """

    terms: Mapping[tuple[int, ...], np.ndarray] = field(default_factory=dict)
    m: int = 2

    def __post_init__(self):
        clean = {}
        for offs, op in self.terms.items():
            key = _canonical_offsets(offs)
            op = np.asarray(op, dtype=complex)
            want = self.m ** len(key)
            if op.shape != (want, want):
                raise DomainError(f"term on {key} has shape {op.shape}, expected {(want, want)}")
            if not is_hermitian(op):
                raise DomainError(f"term on {key} is not Hermitian")
            if key in clean:
                clean[key] = clean[key] + op
            else:
                clean[key] = op
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @property
    def range(self) -> int:
        """Largest diameter of a term support (0 for on-site terms)."""
        return max((len(k) - 1 for k in self.terms), default=0)

    def __add__(self, other: "Interaction") -> "Interaction":
        if self.m != other.m:
            raise DomainError("local dimensions differ")
        merged = dict(self.terms)
        for k, v in other.terms.items():
            merged[k] = merged[k] + v if k in merged else v
        return Interaction(merged, self.m)

    def scaled(self, c: float) -> "Interaction":
        return Interaction({k: c * v for k, v in self.terms.items()}, self.m)

    def placements(self, sites: Sequence[int]):
        """Yield ``(site_tuple, op)`` for every translate contained in ``sites``."""
        present = set(int(s) for s in sites)
        for offs, op in self.terms.items():
            for s in sorted(present):
                placed = tuple(s + o for o in offs)
                if all(p in present for p in placed):
                    yield placed, op


def transverse_ising(J: float = 1.0, h: float = 1.0) -> Interaction:
    """``H = -J sum sx sx - h sum sz``."""
    terms = {}
    if h != 0:
        terms[(0,)] = -h * SIGMA_Z
    if J != 0:
        terms[(0, 1)] = -J * np.kron(SIGMA_X, SIGMA_X)
    return Interaction(terms)


def _embed_coo(op: np.ndarray, positions: Sequence[int], n: int, m: int) -> sp.coo_matrix:
    k = len(positions)
    dim = m**n
    strides = m ** (n - 1 - np.arange(n))
    rest = [p for p in range(n) if p not in positions]
    if rest:
        grids = np.indices((m,) * len(rest)).reshape(len(rest), -1)
        rest_off = strides[rest] @ grids
    else:
        rest_off = np.zeros(1, dtype=np.int64)
    local = np.indices((m,) * k).reshape(k, -1)
    local_off = strides[list(positions)] @ local
    a, b = np.nonzero(op)
    rows = (local_off[a][:, None] + rest_off[None, :]).ravel()
    cols = (local_off[b][:, None] + rest_off[None, :]).ravel()
    vals = np.repeat(op[a, b], rest_off.size)
    return sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim))


def _finish(coo: sp.coo_matrix, dim: int):
    csr = coo.tocsr()
    csr.sum_duplicates()
    return csr.toarray() if dim <= DENSE_LIMIT else csr


def identity(lat: Lattice):
    dim = lat.dim
    return np.eye(dim, dtype=complex) if dim <= DENSE_LIMIT else sp.identity(dim, dtype=complex, format="csr")


def embed_operator(op, sites: Sequence[int], lat: Lattice):
    """Embed an operator on ``len(sites)`` sites (tensor order as given)."""
    op = to_dense(op).astype(complex)
    positions = [lat.index(s) for s in sites]
    if not positions:
        return op[0, 0] * identity(lat)
    if len(set(positions)) != len(positions):
        raise DomainError("repeated sites in embedding")
    if op.shape != (lat.m ** len(sites),) * 2:
        raise DomainError(f"operator shape {op.shape} does not match {len(sites)} sites of dim {lat.m}")
    return _finish(_embed_coo(op, positions, lat.size, lat.m), lat.dim)


def embed_local(op, site: int, lat: Lattice):
    """Single-site embedding ``1 ⊗ ... ⊗ op ⊗ ... ⊗ 1``."""
    return embed_operator(op, [site], lat)


def build_hamiltonian(phi: Interaction, lat: Lattice):
    """Open-boundary local Hamiltonian summing every translate inside ``lat``."""
    if phi.m != lat.m:
        raise DomainError(f"interaction local dimension {phi.m} != lattice m {lat.m}")
    parts = [
        _embed_coo(op, [lat.index(s) for s in placed], lat.size, lat.m)
        for placed, op in phi.placements(lat.sites)
    ]
    dim = lat.dim
    if not parts:
        return _finish(sp.coo_matrix((dim, dim), dtype=complex), dim)
    rows = np.concatenate([p.row for p in parts])
    cols = np.concatenate([p.col for p in parts])
    vals = np.concatenate([p.data for p in parts])
    return _finish(sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)), dim)


@dataclass(frozen=True)
class ObservableSpectrum:
    """Distinct eigenvalues of a single-site observable with their projections.

    ``basis`` is a unitary whose columns are eigenvectors grouped by
    eigenvalue; ``labels[c]`` is the eigenvalue index of column ``c``.
    """

    eigenvalues: np.ndarray
    projections: tuple[np.ndarray, ...]
    basis: np.ndarray
    labels: np.ndarray
    tol: float

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def ranks(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.count)

    @property
    def is_diagonal(self) -> bool:
        """True when every eigenvector is a single basis state."""
        return bool(np.all(np.sum(np.abs(self.basis) > 1e-12, axis=0) == 1))

    def index_of(self, value: float) -> int:
        diff = np.abs(self.eigenvalues - float(np.real(value)))
        i = int(np.argmin(diff))
        if diff[i] > max(self.tol, 1e-12):
            raise DomainError(f"value {value} not in spectrum {self.eigenvalues.tolist()}")
        return i

    def projection(self, value: float) -> np.ndarray:
        return self.projections[self.index_of(value)]

    def operator(self) -> np.ndarray:
        return sum(x * q for x, q in zip(self.eigenvalues, self.projections))


def spectral_projections(X) -> ObservableSpectrum:
    """Spectral decomposition ``X = sum_x x Q(x)`` with clustered eigenvalues."""
    X = to_dense(X).astype(complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DomainError("observable must be square")
    if not is_hermitian(X):
        raise DomainError("observable is not Hermitian")
    X = 0.5 * (X + X.conj().T)
    w, v = np.linalg.eigh(X)
    norm = float(np.max(np.abs(w))) if w.size else 0.0
    tol = CLUSTER_RTOL * norm
    labels = np.zeros(len(w), dtype=int)
    for c in range(1, len(w)):
        labels[c] = labels[c - 1] + (1 if w[c] - w[c - 1] > tol else 0)
    n = labels[-1] + 1
    values = np.array([w[labels == i].mean() for i in range(n)])
    projs = tuple(v[:, labels == i] @ v[:, labels == i].conj().T for i in range(n))
    return ObservableSpectrum(values, projs, v, labels, tol)


def observable(name: str) -> np.ndarray:
    try:
        return PAULI[name]
    except KeyError:
        raise DomainError(f"unknown observable {name!r}; choose from {sorted(PAULI)}") from None


def joint_projection(spec: ObservableSpectrum, config: Mapping[int, float], lat: Lattice):
    """``Q_W(x_W) = ⊗_{i in W} Q(x_i) ⊗ 1`` for ``config = {site: value}``."""
    if spec.m != lat.m:
        raise DomainError("observable dimension does not match lattice")
    sites = list(config)
    if not sites:
        return identity(lat)
    op = np.ones((1, 1), dtype=complex)
    for s in sites:
        op = np.kron(op, spec.projection(config[s]))
    return embed_operator(op, sites, lat)


def configurations(spec: ObservableSpectrum, k: int):
    """All value tuples in ``sp(X)^k`` in lexicographic eigenvalue-index order."""
    for idx in itertools.product(range(spec.count), repeat=k):
        yield tuple(float(spec.eigenvalues[i]) for i in idx)
