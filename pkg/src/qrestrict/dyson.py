"""Dyson expansion, diagram densities, polymer decomposition and a
single-step Kotecky-Preis certificate.

The unperturbed model is an interaction ``phi0`` whose local Hamiltonians
have the product ground state ``P^{⊗Λ}`` for a rank-one site projection
``P``; ``upsilon`` is the perturbation.  A diagram is a tuple
``(t_1 < ... < t_n, S_0..S_n, B_1..B_n)`` on ``Λ x [0, beta]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, SingularConditioningError
from .spin_algebra import (
    SIGMA_X,
    SIGMA_Z,
    Interaction,
    Lattice,
    ObservableSpectrum,
    build_hamiltonian,
    embed_operator,
    to_dense,
)

GL_NODES = 24


# ---------------------------------------------------------------- model

def ising_polymer_model(epsilon: float, h: float = 1.0):
    """``(phi0, upsilon, P)`` for ``H = sum h(1 - sz) - eps sum sx sx``.

    ``P = |up><up|``, the on-site gap is ``2h``.
    """
    phi0 = Interaction({(0,): h * (np.eye(2) - SIGMA_Z)})
    upsilon = Interaction({(0, 1): -epsilon * np.kron(SIGMA_X, SIGMA_X)}) if epsilon else Interaction({})
    P = np.diag([1.0, 0.0]).astype(complex)
    return phi0, upsilon, P


def _check_rank_one(P) -> np.ndarray:
    P = np.asarray(P, dtype=complex)
    if not np.allclose(P @ P, P, atol=1e-12) or not np.allclose(P, P.conj().T, atol=1e-12):
        raise DomainError("P must be an orthogonal projection")
    if abs(np.trace(P).real - 1) > 1e-12:
        raise DomainError("P must have rank one")
    return P


def excitation_projection(P, S: Sequence[int], lat: Lattice):
    """``P_Λ(S) = (⊗_{i∈S} P⊥) ⊗ (⊗_{i∉S} P)``."""
    P = np.asarray(P, dtype=complex)
    Pp = np.eye(P.shape[0]) - P
    op = np.ones((1, 1), dtype=complex)
    for s in lat.sites:
        op = np.kron(op, Pp if s in S else P)
    return op


def peierls_gap(phi0: Interaction, P, sites: Sequence[int]) -> float:
    """Largest ``g`` with ``H0 P(S) >= g|S| P(S)``; checks commutation and ``H0 P(∅) = 0``.

    Raises ``DomainError`` when the first two conditions fail.
    """
    P = _check_rank_one(P)
    lat = Lattice(tuple(sites), phi0.m)
    H0 = to_dense(build_hamiltonian(phi0, lat))
    scale = max(1.0, float(np.abs(H0).max()))
    gap = math.inf
    for r in range(lat.size + 1):
        for S in itertools.combinations(lat.sites, r):
            PS = excitation_projection(P, S, lat)
            if np.abs(H0 @ PS - PS @ H0).max() > 1e-10 * scale:
                raise DomainError(f"H0 does not commute with P({S})")
            if not S:
                if np.abs(H0 @ PS).max() > 1e-10 * scale:
                    raise DomainError("H0 P(∅) != 0")
                continue
            w, v = np.linalg.eigh(PS @ H0 @ PS)
            # eigenvalues on the range of P(S)
            weights = np.real(np.einsum("ij,ik,kj->j", v.conj(), PS, v))
            lowest = w[weights > 0.5].min()
            gap = min(gap, lowest / len(S))
    return float(gap)


def assumption_two(spec: ObservableSpectrum, P) -> bool:
    """``Tr(Q(x) P) > 0`` for every eigenvalue ``x``."""
    P = _check_rank_one(P)
    return all(np.real(np.trace(q @ P)) > 1e-14 for q in spec.projections)


def gamma_constant(spec: ObservableSpectrum, P) -> float:
    """``max_x log(m / Tr(Q(x) P))``."""
    P = _check_rank_one(P)
    traces = [float(np.real(np.trace(q @ P))) for q in spec.projections]
    if min(traces) <= 0:
        raise SingularConditioningError("Tr(Q(x) P) = 0 for some x")
    return max(math.log(spec.m / t) for t in traces)


# ------------------------------------------------------------- Dyson

def _propagator(H0: np.ndarray):
    w, v = np.linalg.eigh(0.5 * (H0 + H0.conj().T))

    def prop(t):
        t = np.asarray(t, dtype=float)
        return np.einsum("ij,...j,kj->...ik", v, np.exp(-np.multiply.outer(t, w)), v.conj())

    return prop


def truncated_dyson(H0, V, beta: float, order: int, nodes: int = GL_NODES) -> np.ndarray:
    """``exp(-beta(H0 + V))`` truncated after ``order`` powers of ``V``.

    The n-th term is ``(-1)^n`` times the simplex integral, evaluated via
    ``K_n(s) = int_0^s exp(-(s-t)H0) V K_{n-1}(t) dt`` with Gauss-Legendre
    on every level.
    """
    if order < 0:
        raise DomainError("order must be >= 0")
    H0 = to_dense(H0).astype(complex)
    V = to_dense(V).astype(complex)
    prop = _propagator(H0)
    x, wts = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * (x + 1)
    wts = 0.5 * wts

    def K(n, s):
        # s: array of upper limits; returns array (..., d, d)
        if n == 0:
            return prop(s)
        t = np.multiply.outer(s, x)
        inner = K(n - 1, t)  # (..., nodes, d, d)
        outer = prop(s[..., None] - t)
        integrand = outer @ V @ inner
        return np.einsum("...q,...qij->...ij", s[..., None] * wts, integrand)

    total = np.zeros_like(H0)
    s = np.array(float(beta))
    for n in range(order + 1):
        total = total + (-1) ** n * K(n, s)
    return total


def dyson_remainder_bound(H0, V, beta: float, order: int) -> float:
    """``(beta ||V||)^{N+1} / (N+1)! * exp(beta (||H0|| + ||V||))``."""
    nH = float(np.linalg.norm(to_dense(H0), 2))
    nV = float(np.linalg.norm(to_dense(V), 2))
    return (beta * nV) ** (order + 1) / math.factorial(order + 1) * math.exp(beta * (nH + nV))


# ------------------------------------------------------------ diagrams

@dataclass(frozen=True)
class Diagram:
    beta: float
    times: tuple[float, ...]
    S: tuple[frozenset, ...]
    B: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        S = tuple(frozenset(int(i) for i in s) for s in self.S)
        B = tuple(tuple(sorted(int(i) for i in b)) for b in self.B)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "B", B)
        if len(S) != len(times) + 1 or len(B) != len(times):
            raise DomainError("need n times, n+1 sets S and n sets B")
        if any(not b for b in B):
            raise DomainError("interaction sets must be non-empty")
        bounds = (0.0,) + times + (float(self.beta),)
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise DomainError("times must satisfy 0 < t_1 < ... < t_n < beta")

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def is_member(self) -> bool:
        """``S_k \\ B_k == S_{k-1} \\ B_k`` for all k."""
        return all(self.S[k] - set(self.B[k - 1]) == self.S[k - 1] - set(self.B[k - 1]) for k in range(1, self.n + 1))

    @property
    def roots(self) -> frozenset:
        return self.S[0] | self.S[-1]

    @property
    def support(self) -> frozenset:
        out = set()
        for s in self.S:
            out |= s
        for b in self.B:
            out |= set(b)
        return frozenset(out)

    @property
    def horizontal_length(self) -> float:
        bounds = (0.0,) + self.times + (self.beta,)
        return sum(len(self.S[k]) * (bounds[k + 1] - bounds[k]) for k in range(self.n + 1))

    @property
    def vertical_length(self) -> int:
        return sum(len(b) for b in self.B)

    def end_to_end(self) -> frozenset:
        out = set(self.S[0])
        for s in self.S[1:]:
            out &= s
        return frozenset(out)

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "times": list(self.times),
            "S": [sorted(s) for s in self.S],
            "B": [list(b) for b in self.B],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Diagram":
        return cls(float(obj["beta"]), tuple(obj.get("times", [])), tuple(obj["S"]), tuple(tuple(b) for b in obj.get("B", [])))


def _connected(b: Sequence[int]) -> bool:
    b = sorted(b)
    return all(y - x == 1 for x, y in zip(b, b[1:]))


@dataclass
class DensityContext:
    """Everything a density needs besides the diagram itself."""

    phi0: Interaction
    upsilon: Interaction
    P: np.ndarray
    spec: ObservableSpectrum
    config: Mapping[int, float]
    sites: tuple[int, ...]
    _cache: dict = field(default_factory=dict, repr=False)

    def with_sites(self, sites, config) -> "DensityContext":
        return DensityContext(self.phi0, self.upsilon, self.P, self.spec, dict(config), tuple(sites))

    def lattice(self) -> Lattice:
        return Lattice(self.sites, self.phi0.m)

    def _operators(self):
        if "ops" not in self._cache:
            lat = self.lattice()
            H0 = to_dense(build_hamiltonian(self.phi0, lat))
            self._cache["ops"] = (lat, _propagator(H0))
        return self._cache["ops"]

    def upsilon_on(self, B: tuple[int, ...]):
        """``Υ(B)`` embedded in the full volume (zero if no term sits exactly on B)."""
        key = ("ups", B)
        if key not in self._cache:
            lat, _ = self._operators()
            dim = lat.dim
            op = np.zeros((dim, dim), dtype=complex)
            for placed, term in self.upsilon.placements(B):
                if tuple(sorted(placed)) == B:
                    op = op + to_dense(embed_operator(term, placed, lat))
            self._cache[key] = op
        return self._cache[key]

    def observable_projection(self):
        if "Q" not in self._cache:
            lat, _ = self._operators()
            op = np.ones((1, 1), dtype=complex)
            for s in lat.sites:
                op = np.kron(op, self.spec.projection(self.config[s]))
            self._cache["Q"] = op
        return self._cache["Q"]

    def normalizer(self) -> float:
        P = _check_rank_one(self.P)
        val = 1.0
        for s in self.sites:
            tr = float(np.real(np.trace(self.spec.projection(self.config[s]) @ P)))
            if tr <= 0:
                raise SingularConditioningError(f"Tr(Q(x_{s}) P) = 0; the observable is not free at site {s}")
            val *= tr
        return val


def _raw_density(d: Diagram, ctx: DensityContext) -> float:
    """Density including the empty diagram (whose value is 1)."""
    if not set(d.support) <= set(ctx.sites):
        raise DomainError("diagram does not fit into the volume")
    for b in d.B:
        if not _connected(b):
            raise DomainError(f"interaction set {b} is not connected")
    if not d.is_member:
        return 0.0
    lat, prop = ctx._operators()
    Q = ctx.observable_projection()
    projs = [excitation_projection(ctx.P, s, lat) for s in d.S]
    bounds = (0.0,) + d.times + (d.beta,)
    # rightmost factor first: exp(-t_1 H0) P(S_0)
    M = prop(bounds[1] - bounds[0]) @ projs[0]
    for k in range(1, d.n + 1):
        M = projs[k] @ prop(bounds[k + 1] - bounds[k]) @ ctx.upsilon_on(d.B[k - 1]) @ M
    val = np.trace(projs[0] @ Q @ M)
    return float(np.real(val)) / ctx.normalizer()


def diagram_density(d: Diagram, ctx: DensityContext) -> float:
    """``rho_n`` at the diagram's times; the empty diagram has weight 0."""
    if d.n == 0 and not d.S[0]:
        ctx.normalizer()
        return 0.0
    return _raw_density(d, ctx)


# ------------------------------------------------------------ polymers

class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _pieces(d: Diagram):
    """Horizontal ``('h', site, k)`` on ``[t_k, t_{k+1}]`` and vertical ``('v', k)`` pieces."""
    out = []
    for k in range(d.n + 1):
        for z in sorted(d.S[k]):
            out.append(("h", z, k))
    for k in range(1, d.n + 1):
        out.append(("v", k))
    return out


def _piece_sites_interval(piece, d: Diagram):
    bounds = (0.0,) + d.times + (d.beta,)
    if piece[0] == "h":
        _, z, k = piece
        return (z,), (bounds[k], bounds[k + 1])
    k = piece[1]
    return d.B[k - 1], (bounds[k], bounds[k])


def _adjacent(p, q, d: Diagram, r: int) -> bool:
    sp_, (a0, a1) = _piece_sites_interval(p, d)
    sq, (b0, b1) = _piece_sites_interval(q, d)
    if a1 < b0 or b1 < a0:
        return False
    reach = 2 * r - 2
    return any(abs(x - y) <= reach for x in sp_ for y in sq)


@dataclass(frozen=True)
class Polymer:
    diagram: Diagram
    interactions: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.diagram.n

    @property
    def roots(self) -> frozenset:
        return self.diagram.roots

    @property
    def skeleton(self):
        """Vertical constituents ``(B, t)`` plus end-to-end horizontal sites."""
        d = self.diagram
        return [(b, t) for b, t in zip(d.B, d.times)] + sorted(d.end_to_end())


def polymer_decompose(d: Diagram, r: int = 1) -> list[Polymer]:
    """Connected components of the space-time adjacency of the diagram's pieces."""
    if r < 1:
        raise DomainError("interaction range r must be >= 1")
    pieces = _pieces(d)
    uf = _UnionFind(len(pieces))
    for a, b in itertools.combinations(range(len(pieces)), 2):
        if _adjacent(pieces[a], pieces[b], d, r):
            uf.union(a, b)
    groups: dict[int, list] = {}
    for i, p in enumerate(pieces):
        groups.setdefault(uf.find(i), []).append(p)
    out = []
    for members in groups.values():
        ks = sorted(p[1] for p in members if p[0] == "v")
        # global interval index at which each polymer interval starts
        starts = [0] + ks
        S = []
        for g in starts:
            S.append(frozenset(p[1] for p in members if p[0] == "h" and p[2] == g))
        sub = Diagram(d.beta, tuple(d.times[k - 1] for k in ks), tuple(S), tuple(d.B[k - 1] for k in ks))
        out.append(Polymer(sub, tuple(ks)))
    out.sort(key=lambda p: (p.interactions, sorted(p.diagram.support)))
    return out


@dataclass(frozen=True)
class FactorizationReport:
    density: float
    product: float
    residual: float
    volume_delta: float
    off_root_delta: float
    polymers: int


def factorization_residual(d: Diagram, ctx: DensityContext, r: int = 1, buffer: int = 1) -> FactorizationReport:
    """Compare ``rho(d)`` with the product over its polymers.

    Also recomputes the density on the volume padded by ``buffer`` sites on
    each side and with every off-root configuration value changed.
    """
    rho = _raw_density(d, ctx)
    polys = polymer_decompose(d, r)
    prod = 1.0
    for p in polys:
        prod *= _raw_density(p.diagram, ctx)
    residual = abs(rho - prod) / (1 + abs(rho))

    lo, hi = min(ctx.sites), max(ctx.sites)
    padded = tuple(range(lo - buffer, lo)) + tuple(ctx.sites) + tuple(range(hi + 1, hi + 1 + buffer))
    fill = float(ctx.spec.eigenvalues[-1])
    cfg = dict(ctx.config)
    for s in padded:
        cfg.setdefault(s, fill)
    vol_delta = abs(_raw_density(d, ctx.with_sites(padded, cfg)) - rho)

    off_delta = 0.0
    for s in ctx.sites:
        if s in d.roots:
            continue
        for x in ctx.spec.eigenvalues:
            if x == ctx.config[s]:
                continue
            cfg = dict(ctx.config)
            cfg[s] = float(x)
            off_delta = max(off_delta, abs(_raw_density(d, ctx.with_sites(ctx.sites, cfg)) - rho))
    return FactorizationReport(rho, prod, residual, vol_delta, off_delta, len(polys))


def random_diagram(rng: np.random.Generator, sites: Sequence[int], beta: float, n_max: int = 4,
                   bond_sets: Sequence[tuple[int, ...]] | None = None, root_prob: float = 0.3) -> Diagram:
    """Random member diagram: ``S_k = S_{k-1} xor B_k`` with random roots."""
    sites = sorted(sites)
    if bond_sets is None:
        bond_sets = [tuple(sites[i:i + 2]) for i in range(len(sites) - 1)]
    n = int(rng.integers(1, n_max + 1))
    times = np.sort(rng.uniform(0, beta, size=n))
    S0 = frozenset(s for s in sites if rng.random() < root_prob)
    S = [S0]
    B = []
    for _ in range(n):
        b = tuple(bond_sets[int(rng.integers(len(bond_sets)))])
        B.append(b)
        S.append(S[-1] ^ frozenset(b))
    return Diagram(beta, tuple(float(t) for t in times), tuple(S), tuple(B))


# ------------------------------------------------------------- KP

@dataclass(frozen=True)
class KPParams:
    alpha1: float
    alpha2: float
    delta1: float
    delta2: float
    gap: float
    kappa: float
    beta: float
    gamma: float
    m: int = 2
    r: int = 1

    def __post_init__(self):
        if not self.alpha1 < self.gap:
            raise DomainError("alpha1 must be smaller than the gap")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise DomainError("alpha1, alpha2 must be positive")
        if not (0 < self.delta1 < 1 and 0 < self.delta2 < 1):
            raise DomainError("delta1, delta2 must lie in (0, 1)")
        if self.gamma < 0:
            raise DomainError("gamma must be >= 0")


@dataclass(frozen=True)
class KPCertificate:
    lhs: dict
    bound: dict
    passes: bool

    @property
    def worst_ratio(self) -> float:
        return max(self.lhs[k] / self.bound[k] for k in self.lhs)


def _set_dist(a: Sequence[int], b: Sequence[int]) -> int:
    return min(abs(x - y) for x in a for y in b)


def kp_certificate(p: KPParams, upsilon: Interaction, sites: Sequence[int]) -> KPCertificate:
    """Evaluate ``int dw(x1) xi(x0, x1) e^{d(x1)}`` against ``d(x0)``.

    ``x0`` ranges over every horizontal constituent and every connected
    vertical ``(B0, t0)``, the latter at the worst case ``t0 = beta/2``.
    """
    sites = sorted(int(s) for s in sites)
    c = p.gap - p.alpha1
    beta = p.beta
    reach = 2 * p.r - 2
    norms: dict[tuple[int, ...], np.ndarray] = {}
    for placed, term in upsilon.placements(sites):
        key = tuple(sorted(placed))
        norms[key] = norms.get(key, 0) + to_dense(term)
    vertical = {B: 4 ** len(B) * math.exp((p.alpha2 + p.gamma + p.delta2) * len(B)) * float(np.linalg.norm(op, 2))
                for B, op in norms.items()}
    w_h = math.exp(-c * beta + p.gamma)
    d_h = p.delta1 * c * beta
    horiz_term = w_h * math.exp(d_h)

    lhs = {}
    bound = {}
    for i in sites:
        val = sum(horiz_term for j in sites if abs(i - j) <= reach)
        val += sum(wB * beta for B, wB in vertical.items() if _set_dist((i,), B) <= reach)
        lhs[("h", i)] = val
        bound[("h", i)] = d_h
    t0 = beta / 2
    time_int = (2 - math.exp(-c * t0) - math.exp(-c * (beta - t0))) / c
    for a in range(len(sites)):
        for b in range(a, len(sites)):
            B0 = tuple(sites[a:b + 1])
            val = sum(horiz_term for j in sites if _set_dist((j,), B0) <= reach)
            val += sum(wB * time_int for B, wB in vertical.items() if _set_dist(B, B0) < 2 * p.r)
            lhs[("v", B0)] = val
            bound[("v", B0)] = p.delta2 * len(B0)
    passes = all(lhs[k] <= bound[k] for k in lhs)
    return KPCertificate(lhs, bound, passes)


def ising_kp_params(kappa: float, beta: float, spec: ObservableSpectrum, alpha1=0.5, alpha2=0.5,
                    delta1=0.5, delta2=0.5, h: float = 1.0) -> tuple[KPParams, Interaction]:
    """KP parameters for the Ising test model with ``eps = exp(-2 kappa)``."""
    phi0, upsilon, P = ising_polymer_model(math.exp(-2 * kappa), h)
    params = KPParams(alpha1, alpha2, delta1, delta2, 2 * h, kappa, beta, gamma_constant(spec, P))
    return params, upsilon
