"""Sparsity-constrained synthesis: pattern projection and projected descent.

A sparsity pattern is a boolean mask over gain entries (true = the entry may
be nonzero, i.e. the information-exchange graph has that edge). Projection is
entrywise masking, so the projected update K - eta * P(grad f) stays in the
pattern subspace exactly. The stepsize is 1/L with L the certified Hessian
bound over the initial sublevel set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateQ, DimensionError, PatternViolation
from .matrices import as_matrix
from .model import LQRInstance, as_gain, certify
from .descent import IterateRecord, IterateTrace, _certify_step, default_grad_tol

PGD_MAX_ITER = 10_000
STEP_MODES = ("fixed_L0", "per_iter_L")


@dataclass(frozen=True)
class SparsityPattern:
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise DimensionError(f"mask must be 2-dimensional, got shape {mask.shape}")
        if not mask.any():
            raise ValueError("pattern must allow at least one entry")
        object.__setattr__(self, "mask", mask)
        mask.setflags(write=False)

    @property
    def m(self) -> int:
        return self.mask.shape[0]

    @property
    def n(self) -> int:
        return self.mask.shape[1]

    @classmethod
    def full(cls, m: int, n: int) -> "SparsityPattern":
        return cls(np.ones((m, n), dtype=bool))

    def to_dict(self) -> dict:
        ii, jj = np.nonzero(self.mask)
        return {"m": self.m, "n": self.n, "allowed": [[int(i), int(j)] for i, j in zip(ii, jj)]}

    @classmethod
    def from_dict(cls, data: dict) -> "SparsityPattern":
        mask = np.zeros((data["m"], data["n"]), dtype=bool)
        for i, j in data["allowed"]:
            mask[i, j] = True
        return cls(mask)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SparsityPattern":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class LipschitzReport:
    """Hessian bound over the f(K0) sublevel set and its ingredients."""

    f0: float
    xi: float
    L: float


def project(pattern: SparsityPattern, M) -> np.ndarray:
    """Zero the entries outside the pattern (orthogonal projection)."""
    M = as_matrix(M, "M")
    if M.shape != pattern.mask.shape:
        raise DimensionError(f"matrix shape {M.shape} != pattern shape {pattern.mask.shape}")
    return np.where(pattern.mask, M, 0.0)


def lipschitz_bound(inst: LQRInstance, K0) -> LipschitzReport:
    """Certified bound L on the Hessian operator norm over the K0 sublevel set."""
    cert = certify(inst, K0)
    return _lipschitz_from_f0(inst, cert.cost)


def _lipschitz_from_f0(inst: LQRInstance, f0: float) -> LipschitzReport:
    if inst.lam_min_Q <= 0.0:
        raise DegenerateQ("the Hessian bound divides by lambda_min(Q)")
    bnorm = inst.b_spectral_norm
    lam_sig = inst.lam_min_Sigma
    lam_q = inst.lam_min_Q
    xi = ((1.0 + bnorm**2) * f0 / lam_sig + inst.lam_max_R - 1.0) / lam_q
    if xi < 0.0:
        raise ValueError(
            "value-derivative bound came out negative; the problem data are "
            "outside the regime the bound was derived for"
        )
    L = (
        2.0 * inst.lam_max_R
        + 2.0 * bnorm**2 * f0 / lam_sig
        + 4.0 * math.sqrt(2.0) * xi * bnorm * f0 / lam_sig
    ) * f0 / lam_q
    return LipschitzReport(f0=f0, xi=xi, L=L)


def pgd_run(
    inst: LQRInstance,
    pattern: SparsityPattern,
    K0,
    stepmode: str = "fixed_L0",
    grad_tol: float | None = None,
    max_iter: int = PGD_MAX_ITER,
) -> IterateTrace:
    """Projected gradient descent over the pattern subspace.

    ``fixed_L0`` keeps eta = 1/L from the starting sublevel set for the whole
    run; ``per_iter_L`` re-estimates L from f(K_j) each iteration, which can
    only enlarge the stepsize as the cost decreases. Stops when the projected
    gradient norm reaches grad_tol. Termination is declared on the projected
    gradient, matching the first-order stationarity notion for the restricted
    cost.
    """
    if stepmode not in STEP_MODES:
        raise ValueError(f"stepmode must be one of {STEP_MODES}, got {stepmode!r}")
    K = as_gain(inst, K0)
    if pattern.mask.shape != K.shape:
        raise DimensionError(f"pattern shape {pattern.mask.shape} != gain shape {K.shape}")
    off_pattern = float(np.linalg.norm(np.where(pattern.mask, 0.0, K)))
    if off_pattern > 1e-14:
        raise PatternViolation(f"K0 carries {off_pattern:.3g} Frobenius mass off-pattern")

    cert = certify(inst, K)
    if grad_tol is None:
        grad_tol = default_grad_tol(cert.cost)
    eta = 1.0 / _lipschitz_from_f0(inst, cert.cost).L

    trace = IterateTrace()
    for j in range(max_iter + 1):
        proj_grad = project(pattern, cert.grad)
        proj_norm = float(np.linalg.norm(proj_grad))
        if stepmode == "per_iter_L":
            eta = 1.0 / _lipschitz_from_f0(inst, cert.cost).L
        record = IterateRecord(
            j=j, K=K, f=cert.cost, grad_norm=float(np.linalg.norm(cert.grad)),
            eta=eta, rho=cert.rho, proj_grad_norm=proj_norm,
        )
        trace.records.append(record)
        if proj_norm <= grad_tol:
            trace.terminated_by = "grad_tol"
            return trace
        if j == max_iter:
            trace.terminated_by = "max_iter"
            return trace
        K_next = K - eta * proj_grad
        cert_next = _certify_step(inst, K_next)
        record.loewner_step = float(np.linalg.eigvalsh(cert.X - cert_next.X)[0])
        K, cert = K_next, cert_next
    return trace
