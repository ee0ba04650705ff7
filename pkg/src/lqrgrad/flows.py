"""Matrix ODE flows over the stabilizing set and their numerical integration.

Three vector fields are supported: the plain gradient flow -2MY, the natural
gradient family -2MY^(1-gamma), and the quasi-Newton flow
-(R + B'XB)^{-1} 2M. Integration is classical RK4 with step doubling; a step
is rejected when a stage leaves the stabilizing set, the local error test
fails, or the energy V = f(K) - f* increases beyond the configured slack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NotSchurStable, StepUnderflow
from .matrices import sym_eig_extremes, symmetrize
from .model import LQRInstance, ValueCertificate, as_gain, certify, optimal_solution

FLOW_KINDS = ("gradient", "natural", "quasi_newton")

GRAD_NORM_STOP = 1e-10


@dataclass(frozen=True)
class FlowConfig:
    """Integration settings for one trajectory.

    ``gamma`` only matters for the natural flow. ``v_tol`` defaults to
    1e-12 * (1 + V(0)) when left as None. ``err_tol`` is the relative local
    error target of the step-doubling controller, and ``v_target`` optionally
    stops the run once V falls to that level (used by the benchmark harness
    to time flows to tolerance without integrating past it).
    """

    kind: str
    gamma: float = 1.0
    t_end: float = 10.0
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    v_tol: float | None = None
    err_tol: float = 1e-8
    v_target: float | None = None

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"kind must be one of {FLOW_KINDS}, got {self.kind!r}")
        if self.kind == "natural" and self.gamma <= 0.0:
            raise ValueError("natural flow requires gamma > 0")
        if not (0.0 < self.dt_min <= self.dt_init):
            raise ValueError("need 0 < dt_min <= dt_init")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")


@dataclass(frozen=True)
class FlowSample:
    t: float
    K: np.ndarray
    V: float
    grad_norm: float
    rho: float


@dataclass
class FlowTrajectory:
    samples: list[FlowSample] = field(default_factory=list)
    f_star: float = float("nan")

    @property
    def final(self) -> FlowSample:
        return self.samples[-1]

    def time_to_v(self, v_level: float) -> float | None:
        """First sampled time with V <= v_level, or None if never reached."""
        for s in self.samples:
            if s.V <= v_level:
                return s.t
        return None


def _sym_fractional_power(Y: np.ndarray, power: float) -> np.ndarray:
    # Fast paths keep the gamma = 0 and gamma = 1 fields bitwise identical to
    # the plain gradient / -2M expressions.
    if power == 0.0:
        return np.eye(Y.shape[0])
    if power == 1.0:
        return Y
    w, V = np.linalg.eigh(symmetrize(Y, "Y"))
    if w[0] <= 0.0:
        raise ValueError("fractional power requires a positive definite matrix")
    return (V * w**power) @ V.T


def flow_rhs(
    inst: LQRInstance,
    K,
    kind: str,
    gamma: float = 1.0,
    cert: ValueCertificate | None = None,
) -> np.ndarray:
    """Vector field of the selected flow at K."""
    K = as_gain(inst, K)
    if cert is None:
        cert = certify(inst, K)
    if kind == "gradient":
        return -cert.grad
    if kind == "natural":
        if power := 1.0 - gamma:
            return -2.0 * cert.M @ _sym_fractional_power(cert.Y, power)
        return -2.0 * cert.M
    if kind == "quasi_newton":
        G = inst.R + inst.B.T @ cert.X @ inst.B
        return -2.0 * np.linalg.solve(G, cert.M)
    raise ValueError(f"kind must be one of {FLOW_KINDS}, got {kind!r}")


def _rk4_step(inst, K, dt, kind, gamma, k1):
    """One classical RK4 step; raises NotSchurStable if a stage leaves S."""
    k2 = flow_rhs(inst, K + 0.5 * dt * k1, kind, gamma)
    k3 = flow_rhs(inst, K + 0.5 * dt * k2, kind, gamma)
    k4 = flow_rhs(inst, K + dt * k3, kind, gamma)
    return K + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(inst: LQRInstance, K0, cfg: FlowConfig) -> FlowTrajectory:
    """Integrate the configured flow from K0.

    Every accepted step is stored as a sample. Terminates at t_end, when the
    gradient norm falls under 1e-10, or (if set) when V reaches v_target.
    Raises StepUnderflow if the controller cannot find an acceptable step
    above dt_min.
    """
    K = as_gain(inst, K0)
    cert = certify(inst, K)  # NotSchurStable propagates for a bad start
    opt = optimal_solution(inst, K)
    f_star = opt.f_star

    v0 = cert.cost - f_star
    v_tol = cfg.v_tol if cfg.v_tol is not None else 1e-12 * (1.0 + v0)

    traj = FlowTrajectory(f_star=f_star)
    t = 0.0
    grad_norm = float(np.linalg.norm(cert.grad))
    traj.samples.append(FlowSample(t=t, K=K, V=v0, grad_norm=grad_norm, rho=cert.rho))

    dt = cfg.dt_init
    v_prev = v0
    while t < cfg.t_end and grad_norm > GRAD_NORM_STOP:
        if cfg.v_target is not None and v_prev <= cfg.v_target:
            break
        dt = min(dt, cfg.t_end - t)
        k1 = flow_rhs(inst, K, cfg.kind, cfg.gamma, cert=cert)
        while True:
            try:
                K_big = _rk4_step(inst, K, dt, cfg.kind, cfg.gamma, k1)
                K_half = _rk4_step(inst, K, 0.5 * dt, cfg.kind, cfg.gamma, k1)
                k1_half = flow_rhs(inst, K_half, cfg.kind, cfg.gamma)
                K_small = _rk4_step(inst, K_half, 0.5 * dt, cfg.kind, cfg.gamma, k1_half)
                err = float(np.linalg.norm(K_big - K_small)) / 15.0
                scale = 1.0 + float(np.linalg.norm(K_small))
                if err > cfg.err_tol * scale:
                    raise _Reject
                # Local extrapolation: the two half steps plus the doubling
                # defect give a 5th-order result.
                K_new = K_small + (K_small - K_big) / 15.0
                cert_new = certify(inst, K_new)
                v_new = cert_new.cost - f_star
                if v_new > v_prev + v_tol:
                    raise _Reject
            except (NotSchurStable, _Reject):
                dt *= 0.5
                if dt < cfg.dt_min:
                    raise StepUnderflow(
                        f"no acceptable step above dt_min={cfg.dt_min} at t={t:.6g}"
                    ) from None
                continue
            break
        t += dt
        K, cert, v_prev = K_new, cert_new, v_new
        grad_norm = float(np.linalg.norm(cert.grad))
        traj.samples.append(FlowSample(t=t, K=K, V=v_prev, grad_norm=grad_norm, rho=cert.rho))
        # Grow the step against the error estimate, capped at doubling.
        if err > 0.0:
            dt *= min(2.0, max(0.5, 0.9 * (cfg.err_tol * scale / err) ** 0.2))
        else:
            dt *= 2.0
    return traj


class _Reject(Exception):
    """Internal control-flow marker for rejected integrator steps."""


def loewner_steps(traj: FlowTrajectory, inst: LQRInstance) -> list[float]:
    """lambda_min(X(t_i) - X(t_{i+1})) for consecutive samples."""
    margins = []
    X_prev = None
    for s in traj.samples:
        X = certify(inst, s.K).X
        if X_prev is not None:
            margins.append(sym_eig_extremes(X_prev - X)[0])
        X_prev = X
    return margins


def export_trajectory(traj: FlowTrajectory, csv_path, gains_path=None, gain_times=None) -> None:
    """Write the t,V,grad_norm,rho table plus an optional sidecar of gains.

    ``gain_times`` selects the samples (nearest in time) whose gains go into
    the JSON sidecar; all samples are exported when it is None.
    """
    with open(csv_path, "w", newline="") as fh:
        fh.write("t,V,grad_norm,rho\n")
        for s in traj.samples:
            fh.write(f"{s.t:.17g},{s.V:.17g},{s.grad_norm:.17g},{s.rho:.17g}\n")
    if gains_path is None:
        return
    if gain_times is None:
        picked = list(traj.samples)
    else:
        times = np.array([s.t for s in traj.samples])
        picked = [traj.samples[int(np.argmin(np.abs(times - t)))] for t in gain_times]
    payload = {
        "f_star": traj.f_star,
        "times": [s.t for s in picked],
        "gains": [s.K.tolist() for s in picked],
    }
    with open(gains_path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
