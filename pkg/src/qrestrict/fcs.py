"""Translation-invariant finitely correlated states on a spin chain.

``E_O(D) = V (D ⊗ O) V^† = sum_{a,b} O[a, b] A_a D A_b^†`` and
``omega(O_1 ... O_l) = (1/k) Tr E_{O_l}(... E_{O_1}(1))`` for ancilla
dimension ``k``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, SingularEventError
from .gibbs import ClassicalDistribution

NORM_TOL = 1e-12
RANK_TOL = 1e-10


@dataclass(frozen=True)
class FcsModel:
    """Kraus-like matrices ``A[a]`` (shape ``(m, k, k)``) of a finitely correlated state."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise DomainError("A must have shape (m, k, k)")
        k = A.shape[1]
        if not np.allclose(np.einsum("aji,ajk->ik", A.conj(), A), np.eye(k), atol=NORM_TOL):
            raise DomainError("sum_a A_a^† A_a must be the identity")
        if not np.allclose(np.einsum("aij,akj->ik", A, A.conj()), np.eye(k), atol=NORM_TOL):
            raise DomainError("sum_a A_a A_a^† must be the identity")
        object.__setattr__(self, "A", A)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.A.shape[1]

    def conditions(self) -> dict[str, bool]:
        """The three structural conditions: proportional-to-unitary, normalized, full algebra."""
        k = self.k
        prop = all(
            np.allclose(a.conj().T @ a, np.trace(a.conj().T @ a) / k * np.eye(k), atol=NORM_TOL) for a in self.A
        )
        span = np.array([(a @ b.conj().T).ravel() for a in self.A for b in self.A])
        rank = np.linalg.matrix_rank(span, tol=RANK_TOL)
        return {"proportional_unitary": bool(prop), "normalized": True, "full_algebra": bool(rank == k * k)}

    def transfer(self, O) -> np.ndarray:
        """Matrix of ``E_O`` acting on row-major vectorized ``k x k`` matrices."""
        O = self._check(O)
        # vec(A D B^†) = (A ⊗ conj(B)) vec(D) for row-major vec
        return np.einsum("ab,aij,bkl->ikjl", O, self.A, self.A.conj()).reshape(self.k**2, self.k**2)

    def _check(self, O) -> np.ndarray:
        O = np.asarray(O, dtype=complex)
        if O.shape != (self.m, self.m):
            raise DomainError(f"local operator has shape {O.shape}, expected {(self.m, self.m)}")
        return O

    def to_json(self) -> dict:
        return {"m": self.m, "A": [[[float(z.real), float(z.imag)] for z in a.ravel()] for a in self.A]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FcsModel":
        m = int(obj["m"])
        mats = obj["A"]
        if len(mats) != m:
            raise DomainError(f"expected {m} matrices, got {len(mats)}")
        out = []
        for flat in mats:
            k = math.isqrt(len(flat))
            if k * k != len(flat):
                raise DomainError("each matrix needs k*k [re, im] entries")
            out.append(np.array([complex(re, im) for re, im in flat]).reshape(k, k))
        return cls(np.array(out))


def aklt() -> FcsModel:
    """``A_a = sigma^a / sqrt(3)`` in the cartesian spin-1 basis ``|x>, |y>, |z>``."""
    paulis = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
    return FcsModel(paulis / math.sqrt(3))


def proportional_unitary(c: Sequence[complex], U) -> FcsModel:
    """Degenerate model ``A_a = c_a U`` (a product state)."""
    c = np.asarray(c, dtype=complex)
    c = c / np.linalg.norm(c)
    return FcsModel(np.einsum("a,ij->aij", c, np.asarray(U, dtype=complex)))


def spin_one_operators() -> dict[str, np.ndarray]:
    """Spin-1 generators ``(S^a)_{bc} = -i eps_{abc}`` and their symmetric quadrupoles."""
    eps = np.zeros((3, 3, 3))
    for (a, b, c), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}.items():
        eps[a, b, c] = s
    S = {name: -1j * eps[i] for i, name in enumerate("xyz")}
    out = {f"S{n}": op for n, op in S.items()}
    for a, b in itertools.combinations_with_replacement("xyz", 2):
        q = S[a] @ S[b] + S[b] @ S[a]
        out[f"Q{a}{b}"] = q - np.trace(q) / 3 * np.eye(3) if a == b else q
    return out


def fcs_expectation(model: FcsModel, word: Sequence) -> complex:
    """``omega(O_1 ⊗ ... ⊗ O_l)`` on consecutive sites."""
    k = model.k
    vec = np.eye(k, dtype=complex).ravel()
    for O in word:
        vec = model.transfer(O) @ vec
    return complex(np.trace(vec.reshape(k, k)) / k)


def projector(model: FcsModel, a: int) -> np.ndarray:
    P = np.zeros((model.m, model.m), dtype=complex)
    P[a, a] = 1
    return P


def fcs_restriction(model: FcsModel, ell: int) -> ClassicalDistribution:
    """``mu(x_1..x_l)`` for ``X = sum_a a |a><a|`` with labels ``1..m``."""
    if ell < 0:
        raise DomainError("ell must be >= 0")
    k = model.k
    m = model.m
    # propagate all words at once: state[w] is the vectorized ancilla matrix
    mats = np.array([model.transfer(projector(model, a)) for a in range(m)])
    states = np.eye(k, dtype=complex).ravel()[None, :]
    for _ in range(ell):
        states = np.einsum("aij,wj->wai", mats, states).reshape(-1, k * k)
    probs = np.real(np.trace(states.reshape(-1, k, k), axis1=1, axis2=2)) / k
    return ClassicalDistribution(tuple(range(ell)), np.arange(1, m + 1, dtype=float), probs.reshape((m,) * ell))


def product_deviation(model: FcsModel, ell: int) -> float:
    """``max |mu(x) - prod mu(x_i)|`` over words of length ``ell``."""
    mu = fcs_restriction(model, ell)
    single = fcs_restriction(model, 1).probs
    prod = np.ones(())
    for _ in range(ell):
        prod = np.multiply.outer(prod, single)
    return float(np.abs(mu.probs - prod).max())


def transfer_spectrum(model: FcsModel) -> np.ndarray:
    """Eigenvalues of ``E_1`` by decreasing modulus."""
    w = np.linalg.eigvals(model.transfer(np.eye(model.m)))
    return w[np.argsort(-np.abs(w), kind="stable")]


def two_point(model: FcsModel, O, r: int) -> complex:
    """Connected ``omega(O_0 O_r) - omega(O)^2``."""
    eye = np.eye(model.m)
    joint = fcs_expectation(model, [O] + [eye] * (r - 1) + [O])
    one = fcs_expectation(model, [O])
    return joint - one * one


def _layout(n: int, b_width: int, a_width: int):
    """Sites of ``V_n``, the ``A`` block at 0 and the ``B`` block at ``n``."""
    if n < 1:
        raise DomainError("separation n must be >= 1")
    a_sites = list(range(-(a_width - 1), 1))
    b_sites = list(range(n, n + b_width))
    V = [s for s in range(-(n - 1), n) if s not in a_sites and s not in b_sites]
    return V, a_sites, b_sites


def _block(op: np.ndarray, width: int, m: int) -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.shape != (m**width, m**width):
        raise DomainError(f"observable shape {op.shape} does not match {width} site(s)")
    return op


def _expect_chain(model: FcsModel, ops: dict[int, np.ndarray], blocks: dict[int, tuple[np.ndarray, int]]) -> complex:
    """Expectation of single-site ``ops`` and multi-site ``blocks`` (keyed by first site)."""
    k, m = model.k, model.m
    covered = set(ops)
    for s, (_, w) in blocks.items():
        covered |= set(range(s, s + w))
    if not covered:
        return 1.0
    lo, hi = min(covered), max(covered)
    vec = np.eye(k, dtype=complex).ravel()
    s = lo
    eye = np.eye(m)
    while s <= hi:
        if s in blocks:
            op, w = blocks[s]
            vec = _block_transfer(model, op, w) @ vec
            s += w
        else:
            vec = model.transfer(ops.get(s, eye)) @ vec
            s += 1
    return complex(np.trace(vec.reshape(k, k)) / k)


def _block_transfer(model: FcsModel, op: np.ndarray, width: int) -> np.ndarray:
    """``E`` for an operator on ``width`` consecutive sites, first site innermost."""
    m, k = model.m, model.k
    if width == 1:
        return model.transfer(op)
    # Kraus matrices of the block: A_{a1..aw} = A_{aw} ... A_{a1}
    kraus = []
    for idx in itertools.product(range(m), repeat=width):
        mat = np.eye(k, dtype=complex)
        for a in idx:
            mat = model.A[a] @ mat
        kraus.append(mat)
    kraus = np.array(kraus)
    return np.einsum("ab,aij,bkl->ikjl", op, kraus, kraus.conj()).reshape(k * k, k * k)


@dataclass(frozen=True)
class ConditionedCorrelation:
    n: int
    x_V: tuple[int, ...]
    value: float
    probability: float


def _widths(model: FcsModel, ops) -> list[int]:
    m = model.m
    out = []
    for op in ops:
        d = np.asarray(op).shape[0]
        w = round(math.log(d, m)) if d > 1 else 1
        if m**w != d or w not in (1, 2):
            raise DomainError("observables must act on one or two sites")
        out.append(w)
    return out


def conditioned_expectation(model: FcsModel, x_V: Sequence[int], A, B, n: int) -> tuple[complex, float]:
    """``(omega^{x_V}(A_0 B_n), omega(Q(x_V)))`` with outcome labels ``1..m``.

    A two-site ``A`` occupies ``{-1, 0}``, a two-site ``B`` occupies ``{n, n+1}``.
    """
    m = model.m
    wa, wb = _widths(model, (A, B))
    A = _block(A, wa, m)
    B = _block(B, wb, m)
    V, a_sites, b_sites = _layout(n, wb, wa)
    if len(x_V) != len(V):
        raise DomainError(f"x_V needs {len(V)} values for sites {V}")
    ops = {}
    for s, x in zip(V, x_V):
        if not 1 <= int(x) <= m:
            raise DomainError(f"label {x} outside 1..{m}")
        ops[s] = projector(model, int(x) - 1)
    Z = _expect_chain(model, ops, {}).real
    if Z <= 1e-300:
        raise SingularEventError(f"measurement outcome {tuple(x_V)} has probability {Z:.3e}")
    val = _expect_chain(model, ops, {a_sites[0]: (A, wa), b_sites[0]: (B, wb)})
    return val / Z, float(Z)


def conditioned_correlation(model: FcsModel, x_V: Sequence[int], A, B, n: int) -> ConditionedCorrelation:
    """``|w^x(A_0 B_n) - w^x(A_0) w^x(B_n)|`` for the state conditioned on ``x_V``."""
    wa, wb = _widths(model, (A, B))
    eye_a = np.eye(model.m**wa)
    eye_b = np.eye(model.m**wb)
    ab, Z = conditioned_expectation(model, x_V, A, B, n)
    a, _ = conditioned_expectation(model, x_V, A, eye_b, n)
    b, _ = conditioned_expectation(model, x_V, eye_a, B, n)
    return ConditionedCorrelation(n, tuple(int(x) for x in x_V), float(abs(ab - a * b)), Z)


@dataclass(frozen=True)
class EntanglementScan:
    best: ConditionedCorrelation
    a_name: str
    b_name: str
    rows: list


def mie_scan(model: FcsModel, n: int, observables: Mapping[str, np.ndarray] | None = None,
             outcomes: Sequence[Sequence[int]] | None = None, seed: int = 0, samples: int = 16) -> EntanglementScan:
    """Maximize the conditioned correlation over an observable family and some outcomes.

    Without explicit ``outcomes`` the all-``1`` outcome plus ``samples``
    random outcomes drawn from ``default_rng(seed)`` are used.
    """
    if observables is None:
        observables = spin_one_operators() if model.m == 3 else {"Z": np.diag(np.arange(model.m, dtype=float))}
    V, _, _ = _layout(n, 1, 1)
    if outcomes is None:
        rng = np.random.default_rng(seed)
        outcomes = [tuple([1] * len(V))] + [tuple(int(v) for v in rng.integers(1, model.m + 1, size=len(V)))
                                            for _ in range(samples)]
    rows = []
    best = None
    for x in outcomes:
        for (na, A), (nb, B) in itertools.product(observables.items(), repeat=2):
            try:
                c = conditioned_correlation(model, x, A, B, n)
            except SingularEventError:
                continue
            rows.append((na, nb, c))
            if best is None or c.value > best[2].value + 1e-15:
                best = (na, nb, c)
    if best is None:
        raise SingularEventError("every outcome has probability zero")
    return EntanglementScan(best[2], best[0], best[1], rows)
