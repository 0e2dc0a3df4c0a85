"""Finite-volume probes of the sigma^z restriction of the Ising ground state.

Sites are ``0..N-1`` with the origin at ``buffer + L**2``; the conditioning
window is ``Gamma_L = origin + {-L^2, ..., L^2}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, QRestrictError, SingularEventError
from .gibbs import QuantumState, classical_restriction, ground_state
from .spin_algebra import (
    SIGMA_X,
    SIGMA_Z,
    Interaction,
    Lattice,
    ObservableSpectrum,
    build_hamiltonian,
    spectral_projections,
)

MAX_SITES = 25
EVENT_FLOOR = 1e-300


@dataclass(frozen=True)
class ProbeSpec:
    epsilon: float
    L: int
    buffer: int = 0
    field_sign: str = "up"

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise DomainError(f"epsilon = {self.epsilon} must lie in [0, 1)")
        if self.L < 1:
            raise DomainError("L must be >= 1")
        if self.buffer < 0:
            raise DomainError("buffer must be >= 0")
        if self.field_sign not in ("up", "down"):
            raise DomainError("field_sign must be 'up' or 'down'")
        if self.N > MAX_SITES:
            raise DomainError(f"N = {self.N} exceeds the cap of {MAX_SITES} sites")

    @property
    def N(self) -> int:
        return 2 * self.L**2 + 1 + 2 * self.buffer

    @property
    def origin(self) -> int:
        return self.buffer + self.L**2

    @property
    def window(self) -> list[int]:
        return list(range(self.origin - self.L**2, self.origin + self.L**2 + 1))

    @property
    def ground_value(self) -> float:
        return 1.0 if self.field_sign == "up" else -1.0


def probe_interaction(epsilon: float, field_sign: str = "up") -> Interaction:
    """``-sum sz - eps sum sx sx`` ("up") or ``sum (sz + 1) - eps sum sx sx`` ("down")."""
    coupling = -epsilon * np.kron(SIGMA_X, SIGMA_X)
    if field_sign == "up":
        onsite = -SIGMA_Z
    elif field_sign == "down":
        onsite = SIGMA_Z + np.eye(2)
    else:
        raise DomainError("field_sign must be 'up' or 'down'")
    terms = {(0,): onsite}
    if epsilon:
        terms[(0, 1)] = coupling
    return Interaction(terms)


@dataclass(frozen=True)
class ConditionalReport:
    L: int
    N: int
    epsilon: float
    p_zero: float
    p_one: float
    gap: float
    error: str | None = None


def conditional_probability(
    state: QuantumState,
    spec: ObservableSpectrum,
    target: tuple[int, float],
    conditioning: Mapping[int, float],
) -> float:
    """``mu(x_target | x_conditioning)``."""
    site, value = target
    cond_sites = [int(s) for s in conditioning]
    if site in cond_sites:
        raise DomainError("target site is also conditioned")
    mu = classical_restriction(state, spec, [site] + cond_sites)
    cond_idx = tuple(spec.index_of(conditioning[s]) for s in cond_sites)
    column = mu.probs[(slice(None),) + cond_idx]
    total = float(column.sum())
    if total <= EVENT_FLOOR:
        raise SingularEventError(f"conditioning event {dict(conditioning)} has probability {total:.3e}")
    return float(column[spec.index_of(value)] / total)


def _probe_state(probe: ProbeSpec, seed: int) -> QuantumState:
    lat = Lattice.chain(probe.N)
    H = build_hamiltonian(probe_interaction(probe.epsilon, probe.field_sign), lat)
    return ground_state(H, "auto", seed=seed, lattice=lat)


def probe_report(probe: ProbeSpec, seed: int = 0, state: QuantumState | None = None) -> ConditionalReport:
    state = state or _probe_state(probe, seed)
    spec = spectral_projections(SIGMA_Z)
    up = probe.ground_value
    down = -up
    o = probe.origin
    far = o + probe.L
    others = {s: up for s in probe.window if s != o}
    mu = classical_restriction(state, spec, probe.window)

    def cond(config):
        idx = tuple(spec.index_of(config[s]) if s != o else slice(None) for s in probe.window)
        column = mu.probs[idx]
        total = float(column.sum())
        if total <= EVENT_FLOOR:
            raise SingularEventError(f"conditioning event at L={probe.L} has probability {total:.3e}")
        return float(column[spec.index_of(down)] / total)

    nan = float("nan")
    values = []
    errors = []
    for config in (others, {**others, far: down}):
        try:
            values.append(cond(config))
        except SingularEventError as exc:
            values.append(nan)
            errors.append(str(exc))
    p_zero, p_one = values
    return ConditionalReport(probe.L, probe.N, probe.epsilon, p_zero, p_one, abs(p_one - p_zero),
                             "; ".join(errors) or None)


def nonlocality_scan(probes: Sequence[ProbeSpec], seed: int = 0) -> list[ConditionalReport]:
    """One report per probe; failures are recorded and the scan continues."""
    out = []
    for probe in probes:
        try:
            out.append(probe_report(probe, seed))
        except QRestrictError as exc:
            nan = float("nan")
            out.append(ConditionalReport(probe.L, probe.N, probe.epsilon, nan, nan, nan, str(exc)))
    return out


def _parity_state(N: int, epsilon: float, seed: int) -> QuantumState:
    if N % 2 or N < 2:
        raise DomainError("N must be a positive even integer")
    if N > 14:
        raise DomainError(f"N = {N} exceeds the cap of 14 sites")
    if epsilon < 0:
        raise DomainError("epsilon must be >= 0")
    lat = Lattice.chain(N)
    return ground_state(build_hamiltonian(probe_interaction(epsilon), lat), "auto", seed=seed, lattice=lat)


def _flip_parity(N: int) -> np.ndarray:
    """Number of flipped (sigma^z = -1) spins mod 2 per table entry."""
    # eigenvalue index 0 is -1 (flipped from the +1 ground direction)
    grids = np.indices((2,) * N)
    return (N - grids.sum(axis=0)) % 2


def sector_extremes(N: int, epsilon: float, seed: int = 0) -> tuple[float, float]:
    """``(max over odd-flip configurations, min over even-flip ones)`` of ``mu^z``."""
    state = _parity_state(N, epsilon, seed)
    mu = classical_restriction(state, spectral_projections(SIGMA_Z), list(range(N)))
    odd = _flip_parity(N) == 1
    return float(mu.probs[odd].max()), float(mu.probs[~odd].min())


def parity_support(N: int, epsilon: float, seed: int = 0) -> float:
    """Largest ``mu^z`` weight on a configuration with an odd number of flips."""
    return sector_extremes(N, epsilon, seed)[0]

