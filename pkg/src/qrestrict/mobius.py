"""Inclusion-exclusion weights, classical potentials and DLR checks.

All traces here are normalized, ``tr = Tr / dim``.  For ``beta`` equal to
``"ground"`` (or ``inf``) every log-trace is kept as an asymptotic pair
``-beta * a + b`` and the Moebius transform acts on both parts; the
``a`` part then acts as a hard-core energy in reconstructions.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, SingularConditioningError
from .gibbs import ClassicalDistribution, format_float, vector_restriction
from .spin_algebra import Interaction, Lattice, ObservableSpectrum, build_hamiltonian, to_dense

MAX_SITES = 8
OVERLAP_FLOOR = 1e-20


def is_ground(beta) -> bool:
    if isinstance(beta, str):
        return beta == "ground"
    return isinstance(beta, float) and math.isinf(beta)


def _subsets(sites: Sequence[int]):
    sites = tuple(sorted(sites))
    for r in range(len(sites) + 1):
        yield from itertools.combinations(sites, r)


class _Spectra:
    """Eigendecompositions of ``H_B`` cached per subset ``B``."""

    def __init__(self, phi: Interaction):
        self.phi = phi
        self._cache: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}

    def __call__(self, B: tuple[int, ...]):
        if B not in self._cache:
            if not B:
                self._cache[B] = (np.zeros(1), np.ones((1, 1), dtype=complex))
            else:
                H = to_dense(build_hamiltonian(self.phi, Lattice(B, self.phi.m)))
                w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
                self._cache[B] = (w, v)
        return self._cache[B]

    def overlaps(self, B: tuple[int, ...], spec: ObservableSpectrum) -> np.ndarray:
        """``P[x, j] = <v_j| Q_B(x) |v_j>`` with ``x`` flattened."""
        w, v = self(B)
        if not B:
            return np.ones((1, 1))
        cols = [vector_restriction(v[:, j], len(B), spec, range(len(B))).ravel() for j in range(v.shape[1])]
        return np.array(cols).T


def _log_tr_pair(w: np.ndarray, weights: np.ndarray, norm: float, beta, scale: float):
    """Return ``(a, b)`` with ``log tr = -beta a + b`` (``a = 0`` for finite beta)."""
    if is_ground(beta):
        mask = weights > OVERLAP_FLOOR
        if not mask.any():
            raise SingularConditioningError("vanishing conditioned trace")
        a = float(w[mask].min())
        near = mask & (w - a <= 1e-9 * max(scale, 1.0))
        return a, float(math.log(weights[near].sum() / norm))
    mask = weights > 0
    if not mask.any():
        raise SingularConditioningError("vanishing conditioned trace")
    return 0.0, float(logsumexp(-beta * w[mask], b=weights[mask]) - math.log(norm))


@dataclass(frozen=True)
class WeightTable:
    """``weights[A]`` for subsets ``A`` (sorted tuples).

    For ground potentials ``energies[A]`` holds the coefficient of ``-beta``.
    """

    weights: Mapping[tuple[int, ...], float]
    beta: object
    energies: Mapping[tuple[int, ...], float] = field(default_factory=dict)
    conditioning: Mapping[int, float] = field(default_factory=dict)

    def __getitem__(self, A) -> float:
        return self.weights[tuple(sorted(A))]

    def total(self, sites: Sequence[int]) -> float:
        """``sum_{A subset sites} w(A)``."""
        return sum(self.weights[A] for A in _subsets(sites))


def _moebius(values: Mapping[tuple[int, ...], float], A: tuple[int, ...]) -> float:
    acc = 0.0
    for B in _subsets(A):
        sign = -1.0 if (len(A) - len(B)) % 2 else 1.0
        acc += sign * values[B]
    return acc


def _check_region(sites: Sequence[int]) -> tuple[int, ...]:
    sites = tuple(sorted(int(s) for s in sites))
    if len(set(sites)) != len(sites):
        raise DomainError("repeated sites")
    if len(sites) > MAX_SITES:
        raise DomainError(f"|Lambda| = {len(sites)} exceeds {MAX_SITES}")
    return sites


def log_trace(phi: Interaction, beta, sites: Sequence[int]) -> float:
    """``log tr exp(-beta H_sites)`` (finite beta)."""
    w, _ = _Spectra(phi)(tuple(sorted(sites)))
    return float(logsumexp(-float(beta) * w) - math.log(len(w)))


def mobius_weights(
    phi: Interaction,
    beta,
    sites: Sequence[int],
    conditioning: tuple[ObservableSpectrum, Mapping[int, float]] | None = None,
) -> WeightTable:
    """Weights ``w(A)`` or ``w^{x_W}(A)`` for every ``A`` inside ``sites``."""
    sites = _check_region(sites)
    spectra = _Spectra(phi)
    ground = is_ground(beta)
    if not ground and (float(beta) < 0 or not math.isfinite(float(beta))):
        raise DomainError("beta must be >= 0, or 'ground'")
    spec, xw = conditioning if conditioning is not None else (None, {})
    xw = {int(k): float(v) for k, v in xw.items()}
    a_vals: dict[tuple[int, ...], float] = {}
    b_vals: dict[tuple[int, ...], float] = {}
    for B in _subsets(sites):
        w, v = spectra(B)
        scale = float(np.max(np.abs(w)))
        cond = [s for s in B if s in xw]
        if spec is None or not cond:
            weights = np.ones(len(w))
            norm = float(len(w))
        else:
            Q = np.ones((1, 1), dtype=complex)
            for s in B:
                Q = np.kron(Q, spec.projection(xw[s]) if s in xw else np.eye(phi.m))
            denom = float(np.prod([np.real(np.trace(spec.projection(xw[s]))) for s in cond]))
            if denom <= 0:
                raise SingularConditioningError(f"Tr Q(x) = 0 for {dict((s, xw[s]) for s in cond)}")
            weights = np.real(np.einsum("ij,ik,kj->j", v.conj(), Q, v))
            weights = np.where(weights < 0, 0.0, weights)
            norm = denom * phi.m ** (len(B) - len(cond))
        a_vals[B], b_vals[B] = _log_tr_pair(w, weights, norm, "ground" if ground else float(beta), scale)
    weights = {A: _moebius(b_vals, A) for A in _subsets(sites)}
    energies = {A: _moebius(a_vals, A) for A in _subsets(sites)} if ground else {}
    return WeightTable(weights, beta, energies, xw)


@dataclass(frozen=True)
class ClassicalPotential:
    """Terms ``Psi_A`` stored as arrays over eigenvalue indices of ``sp(X)^A``.

    ``energies`` is non-empty only for ground-state potentials, where the
    full term reads ``-beta * energies[A] + terms[A]`` as ``beta -> inf``.
    """

    terms: Mapping[tuple[int, ...], np.ndarray]
    values: np.ndarray
    kappa: float = 0.0
    energies: Mapping[tuple[int, ...], np.ndarray] = field(default_factory=dict)
    beta: object = None

    def __post_init__(self):
        for A, t in self.terms.items():
            if not A:
                raise DomainError("Psi of the empty set must be absent")
            if np.shape(t) != (len(self.values),) * len(A):
                raise DomainError(f"term on {A} has wrong domain shape")

    @property
    def hard_core(self) -> bool:
        return bool(self.energies)

    def sites(self) -> tuple[int, ...]:
        return tuple(sorted({s for A in self.terms for s in A}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sites", "config", "value"])
        for A, t in self.terms.items():
            for idx in itertools.product(range(len(self.values)), repeat=len(A)):
                w.writerow([
                    ";".join(str(s) for s in A),
                    ";".join(format_float(self.values[i]) for i in idx),
                    format_float(t[idx]),
                ])
        return buf.getvalue()

    def log_weights(self, sites: Sequence[int], only: Sequence[int] | None = None):
        """Sum of terms over all configurations of ``sites``.

        Returns ``(energy, finite)`` arrays with one axis per site.  With
        ``only`` given, just the terms meeting those sites are summed.
        """
        sites = tuple(sites)
        n = len(self.values)
        shape = (n,) * len(sites)
        finite = np.zeros(shape)
        energy = np.zeros(shape)
        only = set(only) if only is not None else None
        for A, t in self.terms.items():
            if not set(A) <= set(sites):
                continue
            if only is not None and not (set(A) & only):
                continue
            axes = [sites.index(s) for s in A]
            finite += _broadcast(t, axes, len(sites))
            if A in self.energies:
                energy += _broadcast(self.energies[A], axes, len(sites))
        return energy, finite

    def reconstruct(self, sites: Sequence[int]) -> np.ndarray:
        """Normalized ``exp(sum_A Psi_A)`` table over ``sp(X)^sites``."""
        energy, finite = self.log_weights(sites)
        return _normalize(energy, finite, self.hard_core, axis=None)


def _broadcast(t: np.ndarray, axes: Sequence[int], n: int) -> np.ndarray:
    order = np.argsort(axes)
    t = np.transpose(t, order)
    shape = [1] * n
    for ax in sorted(axes):
        shape[ax] = t.shape[sorted(axes).index(ax)]
    return t.reshape(shape)


def _normalize(energy: np.ndarray, finite: np.ndarray, hard_core: bool, axis) -> np.ndarray:
    logw = finite.copy()
    if hard_core:
        emin = energy.min(axis=axis, keepdims=axis is not None)
        scale = max(1.0, float(np.abs(energy).max()))
        logw = np.where(energy - emin <= 1e-9 * scale, logw, -np.inf)
    return np.exp(logw - logsumexp(logw, axis=axis, keepdims=axis is not None))


def classical_potential(phi: Interaction, spec: ObservableSpectrum, beta, sites: Sequence[int]) -> ClassicalPotential:
    """``Psi_A(x_A) = w^{x_A}(A)``, plus ``log tr Q(x_i)`` on single sites."""
    sites = _check_region(sites)
    if spec.m != phi.m:
        raise DomainError("observable dimension does not match interaction")
    ground = is_ground(beta)
    if not ground and (float(beta) < 0 or not math.isfinite(float(beta))):
        raise DomainError("beta must be >= 0, or 'ground'")
    spectra = _Spectra(phi)
    nv = spec.count
    ranks = spec.ranks.astype(float)
    a_vals: dict[tuple[int, ...], np.ndarray] = {}
    b_vals: dict[tuple[int, ...], np.ndarray] = {}
    for B in _subsets(sites):
        w, _ = spectra(B)
        P = spectra.overlaps(B, spec)
        P = np.where(P < 0, 0.0, P)
        scale = float(np.max(np.abs(w)))
        a = np.empty(P.shape[0])
        b = np.empty(P.shape[0])
        for xi, idx in enumerate(itertools.product(range(nv), repeat=len(B))):
            norm = float(np.prod(ranks[list(idx)])) if B else 1.0
            a[xi], b[xi] = _log_tr_pair(w, P[xi], norm, "ground" if ground else float(beta), scale)
        a_vals[B] = a.reshape((nv,) * len(B))
        b_vals[B] = b.reshape((nv,) * len(B))
    terms = {}
    energies = {}
    for A in _subsets(sites):
        if not A:
            continue
        fin = _moebius_tables(b_vals, A)
        if len(A) == 1:
            fin = fin + np.log(ranks / spec.m)
        terms[A] = fin
        if ground:
            energies[A] = _moebius_tables(a_vals, A)
    return ClassicalPotential(terms, spec.eigenvalues.copy(), 0.0, energies, beta)


def _moebius_tables(tables: Mapping[tuple[int, ...], np.ndarray], A: tuple[int, ...]) -> np.ndarray:
    acc = np.zeros(tables[A].shape)
    for B in _subsets(A):
        sign = -1.0 if (len(A) - len(B)) % 2 else 1.0
        if B:
            acc = acc + sign * _broadcast(tables[B], [A.index(s) for s in B], len(A))
        else:
            acc = acc + sign * float(tables[B])
    return acc


def potential_norm(psi: ClassicalPotential, kappa: float, anchor: int | None = None) -> float:
    """``sum_{A containing anchor} e^{kappa |A|} sup_x |Psi_A(x)|``.

    Without an anchor the maximum over all sites is reported.  Hard-core
    energy parts of ground potentials are not included.
    """
    anchors = [anchor] if anchor is not None else list(psi.sites())
    best = 0.0
    for i in anchors:
        total = sum(
            math.exp(kappa * len(A)) * float(np.max(np.abs(t)))
            for A, t in psi.terms.items()
            if i in A
        )
        best = max(best, total)
    return best


def _term_norms(phi: Interaction) -> list[tuple[int, float]]:
    return [(len(k), float(np.linalg.norm(op, 2))) for k, op in phi.terms.items()]


def high_temperature_lhs(phi: Interaction, a: float, beta: float) -> float:
    """``sum_{A containing 0} e^{a|A|} (e^{beta ||Phi(A)||} - 1)``."""
    return sum(size * math.exp(a * size) * math.expm1(beta * nrm) for size, nrm in _term_norms(phi))


def beta_max(phi: Interaction, a: float) -> float:
    """Largest ``beta_0`` meeting the high-temperature condition (``inf`` if unbounded)."""
    if not a > 0:
        raise DomainError("a must be > 0")
    if all(nrm == 0 for _, nrm in _term_norms(phi)):
        return math.inf
    lo, hi = 0.0, 10.0
    while high_temperature_lhs(phi, a, hi) <= a:
        lo, hi = hi, 2 * hi
        if hi > 2**20:
            return math.inf
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if high_temperature_lhs(phi, a, mid) <= a:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class DlrReport:
    residual: float
    checked: int
    skipped: list = field(default_factory=list)


def dlr_check(mu: ClassicalDistribution, psi: ClassicalPotential, inner: Sequence[int]) -> DlrReport:
    """Max deviation of ``mu(x_inner | x_rest)`` from the potential's specification.

    Uses ``exp(+sum Psi_A)`` over ``A`` meeting ``inner`` and contained in
    the window of ``mu``.  Zero-probability boundary events are skipped.
    """
    window = mu.window
    inner = list(inner)
    if not set(inner) < set(window):
        raise DomainError("inner must be a proper subset of the window")
    energy, finite = psi.log_weights(window, only=inner)
    in_axes = tuple(window.index(s) for s in inner)
    model = _normalize(energy, finite, psi.hard_core, axis=in_axes)
    marg = mu.probs.sum(axis=in_axes, keepdims=True)
    out_axes = [i for i in range(len(window)) if i not in in_axes]
    worst = 0.0
    checked = 0
    skipped = []
    flat_marg = np.squeeze(marg, axis=in_axes)
    for idx in itertools.product(range(len(mu.values)), repeat=len(out_axes)):
        if flat_marg[idx] <= 1e-300:
            skipped.append({window[a]: float(mu.values[i]) for a, i in zip(out_axes, idx)})
            continue
        sl = [slice(None)] * len(window)
        for a, i in zip(out_axes, idx):
            sl[a] = i
        cond = mu.probs[tuple(sl)] / flat_marg[idx]
        worst = max(worst, float(np.max(np.abs(cond - model[tuple(sl)]))))
        checked += 1
    return DlrReport(worst, checked, skipped)
