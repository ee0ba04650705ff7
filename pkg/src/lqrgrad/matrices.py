"""Dense real matrix kernel: Stein solvers, spectral radius, eigenvalue extremes.

Everything downstream (cost, gradients, flows, descent) reduces to the
discrete Lyapunov/Stein equation A'XA + Q - X = 0 and a handful of symmetric
eigenvalue queries, so this module is deliberately small and heavily tested.
All functions are pure; arrays are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotSchurStable

# Numerical policy constants. These sit well below every tolerance asserted
# by the test suite so that kernel roundoff never masks a real violation.
STABILITY_MARGIN_TOL = 1e-9
STEIN_TOL = 1e-9
PSD_TOL = 1e-9
SYMMETRY_TOL = 1e-12

# Kronecker solve is exact and cheap up to this order; beyond it the
# squaring/doubling iteration wins on cost.
_KRON_MAX_ORDER = 12
_DOUBLING_REL_TOL = 1e-14
_DOUBLING_MAX_SWEEPS = 128


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-d float array with finite entries."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def as_square(A, name: str = "matrix") -> np.ndarray:
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def symmetrize(S, name: str = "matrix") -> np.ndarray:
    """Check near-symmetry and return the exact symmetric part (S + S') / 2."""
    S = as_square(S, name)
    scale = max(float(np.linalg.norm(S)), 1.0)
    if float(np.linalg.norm(S - S.T)) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric to relative tolerance {SYMMETRY_TOL}")
    return (S + S.T) / 2.0


def frob_inner(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius inner product <A, B> = Tr(A' B)."""
    return float(np.tensordot(A, B, axes=2))


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    A = as_square(A, "A")
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def sym_eig_extremes(S) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the symmetrized input."""
    w = np.linalg.eigvalsh(symmetrize(S, "S"))
    return float(w[0]), float(w[-1])


def loewner_margin(P, Q) -> float:
    """Smallest eigenvalue of Q - P; nonnegative (up to PSD_TOL) iff P <= Q."""
    P = symmetrize(P, "P")
    Q = symmetrize(Q, "Q")
    if P.shape != Q.shape:
        raise DimensionError(f"order mismatch: {P.shape} vs {Q.shape}")
    return float(np.linalg.eigvalsh(Q - P)[0])


@dataclass(frozen=True)
class SteinSolution:
    """Solution record for A'XA + Q - X = 0."""

    X: np.ndarray
    residual: float
    method: str


def _stein_kron(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    lhs = np.eye(n * n) - np.kron(A.T, A.T)
    x = np.linalg.solve(lhs, Q.ravel())
    X = x.reshape(n, n)
    return (X + X.T) / 2.0


def _stein_doubling(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    # X_{k+1} = X_k + A_k' X_k A_k with A_{k+1} = A_k^2 sums (A')^j Q A^j over
    # j < 2^k; squaring makes the tail decay doubly exponentially once the
    # powers of A contract.
    X = Q.copy()
    Ak = A.copy()
    for _ in range(_DOUBLING_MAX_SWEEPS):
        term = Ak.T @ X @ Ak
        X = X + term
        if np.linalg.norm(term) <= _DOUBLING_REL_TOL * max(np.linalg.norm(X), 1e-300):
            break
        Ak = Ak @ Ak
    return (X + X.T) / 2.0


def solve_stein(A, Q, method: str | None = None, rho: float | None = None) -> SteinSolution:
    """Solve A'XA + Q - X = 0 for Schur-stable A.

    Picks the Kronecker vectorized solve for small orders and the doubling
    iteration otherwise; ``method`` forces one of ``kron_direct`` /
    ``doubling``. ``rho`` may carry a precomputed spectral radius to avoid a
    redundant eigenvalue call in hot loops.
    """
    A = as_square(A, "A")
    Q = symmetrize(Q, "Q")
    if A.shape != Q.shape:
        raise DimensionError(f"A and Q order mismatch: {A.shape} vs {Q.shape}")
    if rho is None:
        rho = spectral_radius(A)
    if rho >= 1.0 - STABILITY_MARGIN_TOL:
        raise NotSchurStable(f"spectral radius {rho:.12g} is not < 1 - {STABILITY_MARGIN_TOL}")
    if method is None:
        method = "kron_direct" if A.shape[0] <= _KRON_MAX_ORDER else "doubling"
    if method == "kron_direct":
        X = _stein_kron(A, Q)
    elif method == "doubling":
        X = _stein_doubling(A, Q)
    else:
        raise ValueError(f"unknown Stein method {method!r}")
    residual = float(np.linalg.norm(A.T @ X @ A + Q - X))
    return SteinSolution(X=X, residual=residual, method=method)


def solve_stein_transposed(A, C, method: str | None = None, rho: float | None = None) -> SteinSolution:
    """Solve A Y A' + C - Y = 0, i.e. the Stein equation for A'."""
    A = as_square(A, "A")
    sol = solve_stein(A.T, C, method=method, rho=rho)
    residual = float(np.linalg.norm(A @ sol.X @ A.T + symmetrize(C, "C") - sol.X))
    return SteinSolution(X=sol.X, residual=residual, method=sol.method)
