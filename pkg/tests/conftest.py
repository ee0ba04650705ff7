"""Shared fixtures: the scalar golden instance and random instance factories."""

import numpy as np
import pytest

from lqrgrad import LQRInstance, certify
from lqrgrad.matrices import spectral_radius


@pytest.fixture
def golden():
    """Scalar instance a=2, b=1, q=r=sigma=1 with closed-form everything."""
    return LQRInstance(A=[[2.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Sigma=[[1.0]])


def make_instance(n, m, seed, rho=0.7, identity_costs=False):
    """Random instance with rho(A) = rho (so K = 0 is stabilizing)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= rho / spectral_radius(A)
    B = rng.standard_normal((n, m))
    if identity_costs:
        Q, R, Sigma = np.eye(n), np.eye(m), np.eye(n)
    else:
        gq = rng.standard_normal((n, n))
        Q = gq @ gq.T + 0.1 * np.eye(n)
        gr = rng.standard_normal((m, m))
        R = gr @ gr.T + 0.5 * np.eye(m)
        gs = rng.standard_normal((n, n))
        Sigma = gs @ gs.T / n + 0.5 * np.eye(n)
    return LQRInstance(A=A, B=B, Q=Q, R=R, Sigma=Sigma)


def random_stabilizing_gain(inst, rng, scale=0.3, max_tries=200):
    """Rejection-sample a gain with a comfortable stability margin."""
    for _ in range(max_tries):
        K = scale * rng.standard_normal((inst.m, inst.n))
        if spectral_radius(inst.A - inst.B @ K) < 0.95:
            return K
    raise RuntimeError("failed to sample a stabilizing gain")


def grad_fd(inst, K, h=1e-6):
    """Central finite differences of the cost, entry by entry."""
    K = np.asarray(K, dtype=float)
    G = np.zeros_like(K)
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            Kp, Km = K.copy(), K.copy()
            Kp[i, j] += h
            Km[i, j] -= h
            G[i, j] = (certify(inst, Kp).cost - certify(inst, Km).cost) / (2 * h)
    return G
