"""Restarted Lanczos for the lowest eigenpair of a Hermitian operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


@dataclass(frozen=True)
class LanczosResult:
    value: float
    vector: np.ndarray
    residual: float
    restarts: int
    converged: bool


def _start_vector(dim: int, seed: int, dtype, deflate: list[np.ndarray]) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    if np.iscomplexobj(np.empty(0, dtype=dtype)):
        v = v + 1j * rng.standard_normal(dim)
    v = v.astype(dtype)
    for u in deflate:
        v -= u * np.vdot(u, v)
    return v / np.linalg.norm(v)


def lowest_eigenpair(
    matvec,
    dim: int,
    *,
    norm: float,
    seed: int = 0,
    dtype=float,
    krylov_dim: int = 40,
    max_restarts: int = 500,
    shift_tol: float = 1e-10,
    residual_rtol: float = 1e-8,
    deflate: list[np.ndarray] | None = None,
) -> LanczosResult:
    """Explicitly restarted Lanczos with full reorthogonalization.

    Each cycle grows a Krylov basis of at most ``krylov_dim`` vectors from
    the current Ritz vector.  Iteration stops once the Ritz value moves by
    less than ``shift_tol`` between restarts and the residual is at most
    ``residual_rtol * norm``.  Vectors in ``deflate`` are projected out.
    """
    deflate = list(deflate or [])

    def project(w):
        for u in deflate:
            w -= u * np.vdot(u, w)
        return w

    v = _start_vector(dim, seed, dtype, deflate)
    kdim = max(2, min(krylov_dim, dim - len(deflate)))
    floor = 1e-14 * max(norm, 1e-300)
    prev = np.inf
    theta = np.inf
    res = np.inf
    for restart in range(max_restarts):
        V = np.empty((kdim, dim), dtype=dtype)
        alpha = np.zeros(kdim)
        beta = np.zeros(kdim)
        V[0] = v
        size = kdim
        for j in range(kdim):
            w = project(np.asarray(matvec(V[j])).astype(dtype, copy=False).copy())
            alpha[j] = np.real(np.vdot(V[j], w))
            # two passes of classical Gram-Schmidt against the whole basis
            for _ in range(2):
                w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
            w = project(w)
            b = np.linalg.norm(w)
            if j + 1 == kdim:
                break
            if b <= floor:
                size = j + 1
                break
            beta[j] = b
            V[j + 1] = w / b
        evals, evecs = sla.eigh_tridiagonal(alpha[:size], beta[: size - 1]) if size > 1 else (alpha[:1], np.ones((1, 1)))
        theta = float(evals[0])
        y = evecs[:, 0]
        v = y @ V[:size]
        v = project(v)
        v /= np.linalg.norm(v)
        r = project(np.asarray(matvec(v)).astype(dtype, copy=False).copy()) - theta * v
        res = float(np.linalg.norm(r))
        if abs(theta - prev) < shift_tol and res <= residual_rtol * max(norm, 1e-300):
            return LanczosResult(theta, v, res, restart, True)
        if size < kdim and res <= residual_rtol * max(norm, 1e-300):
            # invariant subspace found
            return LanczosResult(theta, v, res, restart, True)
        prev = theta
    return LanczosResult(theta, v, res, max_restarts, False)
