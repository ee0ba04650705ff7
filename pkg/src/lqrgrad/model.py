"""LQR problem datum and everything evaluated at a feedback gain.

The central objects are :class:`LQRInstance` (system, costs, initial-state
Gram) and :func:`certify`, which solves the two closed-loop Stein equations
at a gain K and packages the value matrix X, Gram Y, gradient factor
M = RK - B'X(A - BK), cost Tr(X Sigma) and gradient 2 M Y. All other
operations (directional value derivative, Hessian quadratic form, dominance
constants, Riccati fixed point) are built on top of that certificate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateQ, DimensionError, NoConvergence, NotSchurStable
from .matrices import (
    PSD_TOL,
    STABILITY_MARGIN_TOL,
    as_matrix,
    as_square,
    frob_inner,
    solve_stein,
    solve_stein_transposed,
    spectral_radius,
    sym_eig_extremes,
    symmetrize,
)


@dataclass(frozen=True)
class LQRInstance:
    """Discrete-time LQR problem: dynamics (A, B), costs (Q, R), Gram Sigma.

    Q must be PSD and R, Sigma strictly PD. Stepsize and bound formulas in
    the descent/structured modules additionally divide by the smallest
    eigenvalue of Q and raise DegenerateQ when it vanishes; plain cost and
    gradient evaluation only needs PSD Q.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        A = as_square(self.A, "A")
        B = as_matrix(self.B, "B")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B must have {A.shape[0]} rows, got {B.shape}")
        Q = symmetrize(self.Q, "Q")
        R = symmetrize(self.R, "R")
        Sigma = symmetrize(self.Sigma, "Sigma")
        if Q.shape[0] != A.shape[0]:
            raise DimensionError(f"Q order {Q.shape[0]} != state dimension {A.shape[0]}")
        if R.shape[0] != B.shape[1]:
            raise DimensionError(f"R order {R.shape[0]} != input dimension {B.shape[1]}")
        if Sigma.shape[0] != A.shape[0]:
            raise DimensionError(f"Sigma order {Sigma.shape[0]} != state dimension {A.shape[0]}")
        if np.linalg.eigvalsh(Q)[0] < -PSD_TOL:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R)[0] <= 0.0:
            raise ValueError("R must be positive definite")
        if np.linalg.eigvalsh(Sigma)[0] <= 0.0:
            raise ValueError("Sigma must be positive definite")
        for name, value in (("A", A), ("B", B), ("Q", Q), ("R", R), ("Sigma", Sigma)):
            object.__setattr__(self, name, value)
            value.setflags(write=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    # Spectral constants reused by every stepsize/bound formula.
    @cached_property
    def lam_min_Q(self) -> float:
        return sym_eig_extremes(self.Q)[0]

    @cached_property
    def lam_min_R(self) -> float:
        return sym_eig_extremes(self.R)[0]

    @cached_property
    def lam_max_R(self) -> float:
        return sym_eig_extremes(self.R)[1]

    @cached_property
    def lam_min_Sigma(self) -> float:
        return sym_eig_extremes(self.Sigma)[0]

    @cached_property
    def b_spectral_norm(self) -> float:
        return float(np.linalg.norm(self.B, 2))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "Sigma": self.Sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LQRInstance":
        inst = cls(
            A=np.array(data["A"], dtype=float),
            B=np.array(data["B"], dtype=float),
            Q=np.array(data["Q"], dtype=float),
            R=np.array(data["R"], dtype=float),
            Sigma=np.array(data["Sigma"], dtype=float),
        )
        if inst.n != data["n"] or inst.m != data["m"]:
            raise DimensionError("declared (n, m) do not match array shapes")
        return inst

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LQRInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ValueCertificate:
    """Closed-loop quantities at a stabilizing gain K."""

    X: np.ndarray
    Y: np.ndarray
    M: np.ndarray
    cost: float
    rho: float
    grad: np.ndarray


@dataclass(frozen=True)
class OptimalSolution:
    K_star: np.ndarray
    X_star: np.ndarray
    Y_star: np.ndarray
    f_star: float
    are_residual: float


@dataclass(frozen=True)
class DominanceBound:
    tau_bound: float
    f0: float


def as_gain(inst: LQRInstance, K, name: str = "K") -> np.ndarray:
    K = as_matrix(K, name)
    if K.shape != (inst.m, inst.n):
        raise DimensionError(f"{name} must be {inst.m}x{inst.n}, got {K.shape}")
    return K


def closed_loop(inst: LQRInstance, K: np.ndarray) -> np.ndarray:
    return inst.A - inst.B @ K


def certify(inst: LQRInstance, K) -> ValueCertificate:
    """Solve the closed-loop Stein equations at K.

    Raises NotSchurStable when rho(A - BK) >= 1 - STABILITY_MARGIN_TOL;
    callers wanting the extended-value convention treat that as cost = +inf.
    """
    K = as_gain(inst, K)
    A_K = closed_loop(inst, K)
    rho = spectral_radius(A_K)
    if rho >= 1.0 - STABILITY_MARGIN_TOL:
        raise NotSchurStable(f"rho(A - BK) = {rho:.12g} is not < 1 - {STABILITY_MARGIN_TOL}")
    X = solve_stein(A_K, K.T @ inst.R @ K + inst.Q, rho=rho).X
    Y = solve_stein_transposed(A_K, inst.Sigma, rho=rho).X
    M = inst.R @ K - inst.B.T @ X @ A_K
    cost = frob_inner(X, inst.Sigma)
    grad = 2.0 * M @ Y
    return ValueCertificate(X=X, Y=Y, M=M, cost=cost, rho=rho, grad=grad)


def cost(inst: LQRInstance, K) -> float:
    return certify(inst, K).cost


def x_prime(inst: LQRInstance, K, E, cert: ValueCertificate | None = None) -> np.ndarray:
    """Directional derivative of the value matrix, X'(K)[E].

    Solves A_K' W A_K - W + M'E + E'M = 0; linear in E and zero at the
    optimum where M vanishes.
    """
    K = as_gain(inst, K)
    E = as_gain(inst, E, "E")
    if cert is None:
        cert = certify(inst, K)
    A_K = closed_loop(inst, K)
    forcing = cert.M.T @ E + E.T @ cert.M
    return solve_stein(A_K, forcing, rho=cert.rho).X


def y_prime(inst: LQRInstance, K, E, cert: ValueCertificate | None = None) -> np.ndarray:
    """Directional derivative of the Gram matrix, Y'(K)[E]."""
    K = as_gain(inst, K)
    E = as_gain(inst, E, "E")
    if cert is None:
        cert = certify(inst, K)
    A_K = closed_loop(inst, K)
    BE = inst.B @ E
    forcing = -(BE @ cert.Y @ A_K.T) - (A_K @ cert.Y @ BE.T)
    return solve_stein_transposed(A_K, forcing, rho=cert.rho).X


def hessian_form(inst: LQRInstance, K, E, cert: ValueCertificate | None = None) -> float:
    """Hessian quadratic form of the cost at K in direction E."""
    K = as_gain(inst, K)
    E = as_gain(inst, E, "E")
    if cert is None:
        cert = certify(inst, K)
    A_K = closed_loop(inst, K)
    W = x_prime(inst, K, E, cert=cert)
    first = (inst.R @ E + inst.B.T @ cert.X @ inst.B @ E) @ cert.Y
    second = (inst.B.T @ W @ A_K) @ cert.Y
    return 2.0 * frob_inner(first, E) - 4.0 * frob_inner(second, E)


def hessian_apply(inst: LQRInstance, K, E, cert: ValueCertificate | None = None) -> np.ndarray:
    """Hessian of the cost applied to E as a linear map on gain space.

    This is the derivative of the gradient map 2 M(K) Y(K); its quadratic
    form <H(E), E> agrees with :func:`hessian_form`.
    """
    K = as_gain(inst, K)
    E = as_gain(inst, E, "E")
    if cert is None:
        cert = certify(inst, K)
    A_K = closed_loop(inst, K)
    W = x_prime(inst, K, E, cert=cert)
    Yp = y_prime(inst, K, E, cert=cert)
    M_prime = inst.R @ E + inst.B.T @ cert.X @ inst.B @ E - inst.B.T @ W @ A_K
    return 2.0 * M_prime @ cert.Y + 2.0 * cert.M @ Yp


def hessian_matrix(inst: LQRInstance, K, cert: ValueCertificate | None = None) -> np.ndarray:
    """Dense (m*n) x (m*n) Hessian assembled by applying the map to a basis."""
    K = as_gain(inst, K)
    if cert is None:
        cert = certify(inst, K)
    m, n = inst.m, inst.n
    H = np.empty((m * n, m * n))
    for col in range(m * n):
        E = np.zeros((m, n))
        E[col // n, col % n] = 1.0
        H[:, col] = hessian_apply(inst, K, E, cert=cert).ravel()
    return H


def hessian_norm_estimate(
    inst: LQRInstance,
    K,
    cert: ValueCertificate | None = None,
    rel_tol: float = 1e-6,
    max_iter: int = 500,
) -> float:
    """Operator-norm estimate of the Hessian via power iteration.

    Start vector is the normalized gradient (all-ones fallback) so repeated
    calls are deterministic.
    """
    K = as_gain(inst, K)
    if cert is None:
        cert = certify(inst, K)
    gnorm = float(np.linalg.norm(cert.grad))
    if gnorm > 1e-300:
        V = cert.grad / gnorm
    else:
        V = np.ones((inst.m, inst.n))
        V /= np.linalg.norm(V)
    lam = 0.0
    for _ in range(max_iter):
        HV = hessian_apply(inst, K, V, cert=cert)
        lam_new = abs(frob_inner(V, HV))
        norm_HV = float(np.linalg.norm(HV))
        if norm_HV <= 1e-300:
            return 0.0
        V = HV / norm_HV
        if abs(lam_new - lam) <= rel_tol * max(lam_new, 1e-300):
            return lam_new
        lam = lam_new
    return lam


def dominance_bound(inst: LQRInstance, K0) -> DominanceBound:
    """Upper bound on the gradient dominance coefficient over the K0 sublevel set."""
    cert = certify(inst, K0)
    if inst.lam_min_Q <= 0.0:
        raise DegenerateQ("dominance bound divides by the smallest eigenvalue of Q")
    tau = cert.cost / (4.0 * inst.lam_min_Q * inst.lam_min_R * inst.lam_min_Sigma**2)
    return DominanceBound(tau_bound=tau, f0=cert.cost)


def dominance_coefficient(inst: LQRInstance, opt: OptimalSolution) -> float:
    """Exact gradient dominance coefficient from the optimal solution."""
    a_star = sym_eig_extremes(inst.R + inst.B.T @ opt.X_star @ inst.B)[0]
    y_star_max = sym_eig_extremes(opt.Y_star)[1]
    return y_star_max / (4.0 * a_star * inst.lam_min_Sigma**2)


def optimal_solution(
    inst: LQRInstance,
    K0,
    x_rel_tol: float = 1e-12,
    max_iter: int = 200,
) -> OptimalSolution:
    """Global minimizer via the value-matrix fixed-point recursion.

    Iterates K <- (R + B'XB)^{-1} B'XA from a stabilizing K0 until the value
    matrix stops moving, then reports the gain, value/Gram matrices, optimal
    cost and the discrete Riccati residual.
    """
    cert = certify(inst, K0)
    X = cert.X
    for _ in range(max_iter):
        G = inst.R + inst.B.T @ X @ inst.B
        K_next = np.linalg.solve(G, inst.B.T @ X @ inst.A)
        cert_next = certify(inst, K_next)
        X_next = cert_next.X
        if np.linalg.norm(X_next - X) <= x_rel_tol * (1.0 + np.linalg.norm(X)):
            G = inst.R + inst.B.T @ X_next @ inst.B
            are = (
                inst.A.T @ X_next @ inst.A
                - X_next
                - inst.A.T @ X_next @ inst.B @ np.linalg.solve(G, inst.B.T @ X_next @ inst.A)
                + inst.Q
            )
            return OptimalSolution(
                K_star=K_next,
                X_star=X_next,
                Y_star=cert_next.Y,
                f_star=cert_next.cost,
                are_residual=float(np.linalg.norm(are)),
            )
        X = X_next
    raise NoConvergence(f"value-matrix recursion did not settle in {max_iter} iterations")


def truncated_cost(inst: LQRInstance, K, terms: int) -> float:
    """Partial sum of the defining cost series; independent oracle for certify."""
    K = as_gain(inst, K)
    A_K = closed_loop(inst, K)
    stage = inst.Q + K.T @ inst.R @ K
    total = 0.0
    P = np.eye(inst.n)
    for _ in range(terms + 1):
        total += frob_inner(P.T @ stage @ P, inst.Sigma)
        P = A_K @ P
    return total
