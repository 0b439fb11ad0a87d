"""Dense symmetric linear algebra and a finite-difference gradient oracle.

Everything here is a pure function of its arguments. Factorizations are
delegated to LAPACK through numpy/scipy (``potrf`` and ``syevd``), which are
deterministic for a fixed input, so downstream bound verdicts reproduce
bit-for-bit.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonFiniteEvaluation,
    NotPositiveDefinite,
)

#: Repo-wide numeric defaults. Callers may override per call.
DEFAULTS = {
    "jitter_scale": 1e-8,
    "jitter_doublings": 3,
    "fd_step": 1e-5,
}


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns orthonormal


class CholeskyFactor(NamedTuple):
    lower: np.ndarray
    jitter: float


def as_sym(A) -> np.ndarray:
    """Validate a square finite matrix and return its exact symmetrization."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteEvaluation("matrix has non-finite entries")
    return 0.5 * (A + A.T)


def cholesky(A, jitter_scale: float | None = None, doublings: int | None = None) -> CholeskyFactor:
    """Lower Cholesky factor with the diagonal-jitter retry policy.

    The first attempt is unjittered. On failure ``jitter_scale * mean(diag A)``
    is added to the diagonal and doubled up to ``doublings`` times.
    """
    A = as_sym(A)
    scale = DEFAULTS["jitter_scale"] if jitter_scale is None else jitter_scale
    doublings = DEFAULTS["jitter_doublings"] if doublings is None else doublings
    n = A.shape[0]
    base = scale * max(np.trace(A) / n, np.finfo(float).tiny)
    jitters = [0.0] + [base * 2.0**k for k in range(doublings + 1)]
    for jitter in jitters:
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(n) if jitter else A)
        except np.linalg.LinAlgError:
            continue
        return CholeskyFactor(L, jitter)
    raise NotPositiveDefinite(f"matrix of order {n} is not positive definite after {doublings} jitter doublings")


def cho_solve(factor: CholeskyFactor, b) -> np.ndarray:
    return scipy.linalg.cho_solve((factor.lower, True), np.asarray(b, dtype=float))


def cholesky_solve(A, b, **kwargs) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``."""
    b = np.asarray(b, dtype=float)
    A = np.asarray(A, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has order {A.shape[0]}")
    return cho_solve(cholesky(A, **kwargs), b)


def logdet_from_factor(factor: CholeskyFactor) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))


def sym_eigen(A) -> EigenDecomposition:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""
    A = as_sym(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK non-convergence
        raise ConvergenceFailure(str(exc)) from exc
    return EigenDecomposition(w, V)


def spectral_norm(A) -> float:
    """Largest absolute eigenvalue of a symmetric matrix."""
    w = sym_eigen(A).eigenvalues
    return float(max(abs(w[0]), abs(w[-1])))


def fd_gradient(f: Callable[[np.ndarray], float], x, h=None) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    The default step for coordinate i is ``1e-5 * max(1, |x_i|)``; an explicit
    ``h`` (scalar or per-coordinate) is used as the absolute step.
    """
    x = np.array(x, dtype=float).ravel()
    if h is None:
        steps = DEFAULTS["fd_step"] * np.maximum(1.0, np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += steps[i]
        xm[i] -= steps[i]
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluation(f"f is not finite around coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * steps[i])
    return grad
