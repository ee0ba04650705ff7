"""Forward-Euler descent iterations with certified stepsize rules.

Gradient descent uses the adaptive b/c/d rule (the conservative variant whose
cubic coefficient carries the squared smallest eigenvalue of Q); natural
gradient descent uses 1 / (2 lambda_max(R + B'XB)); the quasi-Newton
iteration is the closed-form value-matrix recursion. Each run returns an
IterateTrace whose records carry enough to check every monotonicity and rate
claim after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateQ,
    InsufficientData,
    InternalStabilityLoss,
    NotSchurStable,
)
from .matrices import sym_eig_extremes
from .model import LQRInstance, ValueCertificate, as_gain, certify

GD_MAX_ITER = 100_000
NGD_MAX_ITER = 10_000
QN_MAX_ITER = 100


@dataclass(frozen=True)
class StepsizeReport:
    """Constants behind one gradient-descent stepsize.

    a = lambda_max(R + B'XB), bmy_norm = ||BMY||_2, y_max = lambda_max(Y);
    b, c are the linear/quadratic decrease coefficients, d = max(b, c) and
    eta = sqrt(1/(3d) + 1/9) - 1/3. y_prime_bound is the certified spectral
    bound on the Gram derivative along the descent ray.
    """

    a: float
    bmy_norm: float
    y_max: float
    b: float
    c: float
    d: float
    eta: float
    y_prime_bound: float


@dataclass
class IterateRecord:
    j: int
    K: np.ndarray
    f: float
    grad_norm: float
    eta: float
    rho: float
    loewner_step: float = float("nan")
    proj_grad_norm: float = float("nan")


@dataclass
class IterateTrace:
    records: list[IterateRecord] = field(default_factory=list)
    terminated_by: str = "max_iter"

    def costs(self) -> np.ndarray:
        return np.array([r.f for r in self.records])


def default_grad_tol(f0: float) -> float:
    return 1e-8 * (1.0 + f0)


def gd_stepsize(inst: LQRInstance, cert: ValueCertificate) -> StepsizeReport:
    """Adaptive gradient-descent stepsize constants at the certified gain."""
    if inst.lam_min_Q <= 0.0:
        raise DegenerateQ("gradient-descent stepsize divides by lambda_min(Q)")
    a = sym_eig_extremes(inst.R + inst.B.T @ cert.X @ inst.B)[1]
    bmy_norm = float(np.linalg.norm(inst.B @ cert.M @ cert.Y, 2))
    y_max = sym_eig_extremes(cert.Y)[1]
    f = cert.cost
    lam_q = inst.lam_min_Q
    b = a * f / lam_q + 4.0 * f * bmy_norm * y_max / (lam_q * inst.lam_min_Sigma)
    c = a * 4.0 * bmy_norm * y_max * f / lam_q**2
    d = max(b, c)
    eta = math.sqrt(1.0 / (3.0 * d) + 1.0 / 9.0) - 1.0 / 3.0
    y_prime_bound = 4.0 * f * y_max * bmy_norm / lam_q
    return StepsizeReport(
        a=a, bmy_norm=bmy_norm, y_max=y_max, b=b, c=c, d=d, eta=eta,
        y_prime_bound=y_prime_bound,
    )


def appendix_stepsize_floor(inst: LQRInstance, cert0: ValueCertificate) -> tuple[float, float]:
    """Sublevel-set bound delta on max(b, c) and the implied stepsize floor.

    Evaluated once at the starting gain; every adaptive stepsize along the
    run is guaranteed to stay at or above the floor.
    """
    if inst.lam_min_Q <= 0.0:
        raise DegenerateQ("stepsize floor divides by lambda_min(Q)")
    f0 = cert0.cost
    lam_q = inst.lam_min_Q
    lam_sig = inst.lam_min_Sigma
    b_norm = inst.b_spectral_norm
    a_hat = inst.lam_max_R + b_norm**2 * f0 / lam_sig
    m_hat = math.sqrt(a_hat * f0)
    y_hat_sq = (f0 / lam_q) ** 2
    b_bound = (a_hat * f0 + 4.0 * b_norm * m_hat * y_hat_sq) / lam_q
    c_bound = (4.0 * a_hat * b_norm * f0 * m_hat * y_hat_sq) / lam_q
    delta = max(b_bound, c_bound)
    floor = math.sqrt(1.0 / delta + 1.0 / 9.0) - 1.0 / 3.0
    return delta, floor


def _certify_step(inst, K_next) -> ValueCertificate:
    try:
        return certify(inst, K_next)
    except NotSchurStable as exc:
        raise InternalStabilityLoss(
            "descent iterate left the stabilizing set; the stepsize theory forbids this"
        ) from exc


def _run_loop(inst, K0, grad_tol, max_iter, step_fn) -> IterateTrace:
    """Shared driver: step_fn(K, cert) -> (eta, K_next)."""
    K = as_gain(inst, K0)
    cert = certify(inst, K)
    if grad_tol is None:
        grad_tol = default_grad_tol(cert.cost)
    trace = IterateTrace()
    for j in range(max_iter + 1):
        grad_norm = float(np.linalg.norm(cert.grad))
        eta, K_next = step_fn(K, cert)
        record = IterateRecord(j=j, K=K, f=cert.cost, grad_norm=grad_norm, eta=eta, rho=cert.rho)
        trace.records.append(record)
        if grad_norm <= grad_tol:
            trace.terminated_by = "grad_tol"
            return trace
        if j == max_iter:
            trace.terminated_by = "max_iter"
            return trace
        cert_next = _certify_step(inst, K_next)
        record.loewner_step = sym_eig_extremes(cert.X - cert_next.X)[0]
        K, cert = K_next, cert_next
    return trace


def gd_run(inst: LQRInstance, K0, grad_tol: float | None = None, max_iter: int = GD_MAX_ITER) -> IterateTrace:
    """Gradient descent K <- K - eta * 2MY with the adaptive stepsize rule."""

    def step(K, cert):
        report = gd_stepsize(inst, cert)
        return report.eta, K - report.eta * cert.grad

    return _run_loop(inst, K0, grad_tol, max_iter, step)


def ngd_run(inst: LQRInstance, K0, grad_tol: float | None = None, max_iter: int = NGD_MAX_ITER) -> IterateTrace:
    """Natural gradient descent K <- K - 2 eta M with the optimal stepsize."""

    def step(K, cert):
        a = sym_eig_extremes(inst.R + inst.B.T @ cert.X @ inst.B)[1]
        eta = 1.0 / (2.0 * a)
        return eta, K - 2.0 * eta * cert.M

    return _run_loop(inst, K0, grad_tol, max_iter, step)


def qn_run(inst: LQRInstance, K0, tol: float | None = None, max_iter: int = QN_MAX_ITER) -> IterateTrace:
    """Quasi-Newton / value-matrix recursion K <- (R + B'XB)^{-1} B'XA."""

    def step(K, cert):
        G = inst.R + inst.B.T @ cert.X @ inst.B
        return 0.5, np.linalg.solve(G, inst.B.T @ cert.X @ inst.A)

    return _run_loop(inst, K0, tol, max_iter, step)


def ngd_q0(inst: LQRInstance, cert0: ValueCertificate, y_star_max: float) -> float:
    """Per-step contraction factor guaranteed for natural gradient descent."""
    a0 = sym_eig_extremes(inst.R + inst.B.T @ cert0.X @ inst.B)[1]
    return 1.0 - 4.0 * inst.lam_min_R / (y_star_max * a0)


def rate_fit(trace: IterateTrace, f_star: float) -> tuple[str, float]:
    """Classify a trace as linearly or quadratically convergent and fit it.

    Records with gap <= 1e-14 are dropped as roundoff floor. The regression
    of log(gap_{j+1}) on log(gap_j) has slope ~1 for a geometric sequence and
    ~2 for a Q-quadratic one; 1.5 is the decision boundary. The linear rate
    is exp(slope of log gap vs j); the quadratic coefficient is the largest
    consecutive ratio gap_{j+1} / gap_j^2.
    """
    gaps = []
    for r in trace.records:
        e = r.f - f_star
        if e <= 1e-14:
            break
        gaps.append((r.j, e))
    if len(gaps) < 4:
        raise InsufficientData(f"need >= 4 records above the gap floor, got {len(gaps)}")
    j = np.array([g[0] for g in gaps], dtype=float)
    log_e = np.log(np.array([g[1] for g in gaps]))
    slope_pairs = np.polyfit(log_e[:-1], log_e[1:], 1)[0]
    if slope_pairs >= 1.5:
        e = np.exp(log_e)
        coefficient = float(np.max(e[1:] / e[:-1] ** 2))
        return "quadratic", coefficient
    slope = np.polyfit(j, log_e, 1)[0]
    return "linear", float(np.exp(slope))


def trace_to_csv(trace: IterateTrace, path, f_star: float | None = None, proj_grad: bool = False) -> None:
    """Write the per-iteration table; gap column is blank without f_star."""
    header = "j,f,gap,grad_norm,eta,rho,loewner_step"
    if proj_grad:
        header += ",proj_grad_norm"
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for r in trace.records:
            gap = "" if f_star is None else f"{r.f - f_star:.17g}"
            loewner = "" if math.isnan(r.loewner_step) else f"{r.loewner_step:.17g}"
            row = (
                f"{r.j},{r.f:.17g},{gap},{r.grad_norm:.17g},"
                f"{r.eta:.17g},{r.rho:.17g},{loewner}"
            )
            if proj_grad:
                row += f",{r.proj_grad_norm:.17g}"
            fh.write(row + "\n")
