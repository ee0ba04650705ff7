"""Model tests: certificates, derivatives, dominance, the Riccati oracle."""

import json
import math

import numpy as np
import pytest

from lqrgrad import (
    DegenerateQ,
    LQRInstance,
    NotSchurStable,
    certify,
    dominance_bound,
    dominance_coefficient,
    hessian_apply,
    hessian_form,
    hessian_matrix,
    hessian_norm_estimate,
    optimal_solution,
    x_prime,
    y_prime,
)
from lqrgrad.matrices import frob_inner, loewner_margin, spectral_radius
from lqrgrad.model import truncated_cost

from conftest import grad_fd, make_instance, random_stabilizing_gain

PHI = (1.0 + math.sqrt(5.0)) / 2.0


class TestCertify:
    def test_golden_values(self, golden):
        c = certify(golden, [[1.5]])
        assert c.X[0, 0] == pytest.approx(13.0 / 3.0, rel=1e-14)
        assert c.Y[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-14)
        assert c.M[0, 0] == pytest.approx(-2.0 / 3.0, rel=1e-13)
        assert c.cost == pytest.approx(13.0 / 3.0, rel=1e-14)
        assert c.grad[0, 0] == pytest.approx(-16.0 / 9.0, rel=1e-13)
        assert c.rho == pytest.approx(0.5, abs=1e-14)

    def test_boundary_gain_raises(self, golden):
        with pytest.raises(NotSchurStable):
            certify(golden, [[1.0]])

    def test_gradient_vanishes_at_optimum(self, golden):
        opt = optimal_solution(golden, [[1.5]])
        c = certify(golden, opt.K_star)
        assert np.linalg.norm(c.grad) <= 1e-8

    def test_certificate_invariants_random(self):
        rng = np.random.default_rng(0)
        for seed in range(5):
            inst = make_instance(4, 2, seed)
            K = random_stabilizing_gain(inst, rng)
            c = certify(inst, K)
            assert c.rho < 1.0
            assert np.linalg.eigvalsh(c.X)[0] >= -1e-9
            # Y dominates Sigma since it sums A_K^j Sigma (A_K')^j from j=0.
            assert loewner_margin(inst.Sigma, c.Y) >= -1e-9
            assert c.cost == pytest.approx(frob_inner(c.X, inst.Sigma), rel=1e-10)

    def test_cost_matches_truncated_series(self):
        rng = np.random.default_rng(1)
        for seed in range(3):
            inst = make_instance(4, 2, seed + 10)
            K = random_stabilizing_gain(inst, rng)
            c = certify(inst, K)
            terms = int(np.ceil(np.log(1e-12) / (2.0 * np.log(c.rho)))) + 1
            assert truncated_cost(inst, K, terms) == pytest.approx(c.cost, abs=1e-8 * (1 + c.cost))


class TestGradientAndHessian:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for seed in range(4):
            inst = make_instance(4, 3, seed + 20)
            K = random_stabilizing_gain(inst, rng)
            c = certify(inst, K)
            fd = grad_fd(inst, K)
            scale = np.abs(fd) + 1e-6
            assert np.max(np.abs(c.grad - fd) / scale) <= 1e-5

    def test_x_prime_zero_direction(self, golden):
        assert x_prime(golden, [[1.5]], [[0.0]]) == pytest.approx(np.zeros((1, 1)))

    def test_x_prime_golden(self, golden):
        assert x_prime(golden, [[1.5]], [[1.0]])[0, 0] == pytest.approx(-16.0 / 9.0, rel=1e-13)

    def test_x_prime_linear_in_direction(self):
        rng = np.random.default_rng(3)
        inst = make_instance(3, 2, 31)
        K = random_stabilizing_gain(inst, rng)
        E1 = rng.standard_normal((2, 3))
        E2 = rng.standard_normal((2, 3))
        lhs = x_prime(inst, K, 2.0 * E1 - 0.5 * E2)
        rhs = 2.0 * x_prime(inst, K, E1) - 0.5 * x_prime(inst, K, E2)
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_x_prime_vanishes_at_optimum(self, golden):
        opt = optimal_solution(golden, [[1.5]])
        assert np.linalg.norm(x_prime(golden, opt.K_star, [[1.0]])) <= 1e-7

    def test_x_prime_finite_difference(self):
        rng = np.random.default_rng(4)
        inst = make_instance(3, 2, 32)
        K = random_stabilizing_gain(inst, rng)
        E = rng.standard_normal((2, 3))
        h = 1e-6
        fd = (certify(inst, K + h * E).X - certify(inst, K - h * E).X) / (2 * h)
        W = x_prime(inst, K, E)
        assert np.linalg.norm(W - fd) <= 1e-5 * (1 + np.linalg.norm(fd))

    def test_hessian_form_golden(self, golden):
        assert hessian_form(golden, [[1.5]], [[1.0]]) == pytest.approx(512.0 / 27.0, rel=1e-13)

    def test_hessian_form_positive_at_optimum(self):
        inst = make_instance(3, 2, 33)
        opt = optimal_solution(inst, np.zeros((2, 3)))
        rng = np.random.default_rng(5)
        for _ in range(5):
            E = rng.standard_normal((2, 3))
            assert hessian_form(inst, opt.K_star, E) > 0.0

    def test_hessian_form_quadratic_homogeneity(self):
        rng = np.random.default_rng(6)
        inst = make_instance(3, 2, 34)
        K = random_stabilizing_gain(inst, rng)
        E = rng.standard_normal((2, 3))
        assert hessian_form(inst, K, 2.0 * E) == pytest.approx(4.0 * hessian_form(inst, K, E), rel=1e-12)

    def test_hessian_form_matches_second_differences(self):
        rng = np.random.default_rng(7)
        for seed in range(3):
            inst = make_instance(3, 2, seed + 40)
            K = random_stabilizing_gain(inst, rng)
            E = rng.standard_normal((2, 3))
            E /= np.linalg.norm(E)
            h = 1e-4
            f0 = certify(inst, K).cost
            fd = (certify(inst, K + h * E).cost - 2 * f0 + certify(inst, K - h * E).cost) / h**2
            assert hessian_form(inst, K, E) == pytest.approx(fd, rel=1e-4)

    def test_hessian_apply_consistent_with_form(self):
        rng = np.random.default_rng(8)
        inst = make_instance(3, 2, 41)
        K = random_stabilizing_gain(inst, rng)
        E = rng.standard_normal((2, 3))
        F = rng.standard_normal((2, 3))
        assert frob_inner(hessian_apply(inst, K, E), E) == pytest.approx(hessian_form(inst, K, E), rel=1e-12)
        # self-adjointness
        assert frob_inner(hessian_apply(inst, K, E), F) == pytest.approx(
            frob_inner(E, hessian_apply(inst, K, F)), rel=1e-10
        )

    def test_hessian_matrix_matches_polarization(self):
        inst = make_instance(2, 2, 42)
        rng = np.random.default_rng(9)
        K = random_stabilizing_gain(inst, rng)
        H = hessian_matrix(inst, K)
        dim = 4
        basis = [np.eye(dim)[i].reshape(2, 2) for i in range(dim)]
        H_oracle = np.zeros((dim, dim))
        for a in range(dim):
            for b in range(dim):
                q_ab = hessian_form(inst, K, basis[a] + basis[b])
                q_a = hessian_form(inst, K, basis[a])
                q_b = hessian_form(inst, K, basis[b])
                H_oracle[a, b] = 0.5 * (q_ab - q_a - q_b)
        assert np.allclose(H, H_oracle, atol=1e-8 * (1 + np.abs(H_oracle).max()))

    def test_hessian_norm_scalar_is_exact(self, golden):
        form = abs(hessian_form(golden, [[1.5]], [[1.0]]))
        assert hessian_norm_estimate(golden, [[1.5]]) == pytest.approx(form, rel=1e-9)

    def test_hessian_norm_positive_at_optimum(self, golden):
        opt = optimal_solution(golden, [[1.5]])
        assert hessian_norm_estimate(golden, opt.K_star) > 0.0

    def test_hessian_norm_matches_dense_enumeration(self):
        rng = np.random.default_rng(10)
        inst = make_instance(2, 2, 43)
        K = random_stabilizing_gain(inst, rng)
        H = hessian_matrix(inst, K)
        dense_norm = np.max(np.abs(np.linalg.eigvalsh((H + H.T) / 2)))
        assert hessian_norm_estimate(inst, K) == pytest.approx(dense_norm, rel=1e-5)

    def test_y_prime_finite_difference(self):
        rng = np.random.default_rng(11)
        inst = make_instance(3, 2, 44)
        K = random_stabilizing_gain(inst, rng)
        E = rng.standard_normal((2, 3))
        h = 1e-6
        fd = (certify(inst, K + h * E).Y - certify(inst, K - h * E).Y) / (2 * h)
        assert np.linalg.norm(y_prime(inst, K, E) - fd) <= 1e-5 * (1 + np.linalg.norm(fd))


class TestDominance:
    def test_golden_bound(self, golden):
        db = dominance_bound(golden, [[1.5]])
        assert db.tau_bound == pytest.approx(13.0 / 12.0, rel=1e-14)
        assert db.f0 == pytest.approx(13.0 / 3.0, rel=1e-14)

    def test_bound_scaling_in_sigma(self):
        inst = make_instance(3, 2, 50)
        K0 = np.zeros((2, 3))
        db1 = dominance_bound(inst, K0)
        inst2 = LQRInstance(A=inst.A, B=inst.B, Q=inst.Q, R=inst.R, Sigma=2.0 * inst.Sigma)
        db2 = dominance_bound(inst2, K0)
        # cost is linear in Sigma while the bound divides by lambda_min(Sigma)^2,
        # so the bound scales by f(K0; 2 Sigma) / (4 f(K0; Sigma)) = 1/2.
        assert db2.tau_bound == pytest.approx(db1.tau_bound * db2.f0 / (4.0 * db1.f0), rel=1e-12)
        assert db2.tau_bound == pytest.approx(db1.tau_bound / 2.0, rel=1e-12)

    def test_identity_costs_bound(self):
        inst = make_instance(4, 2, 51, identity_costs=True)
        K0 = np.zeros((2, 4))
        db = dominance_bound(inst, K0)
        assert db.tau_bound == pytest.approx(db.f0 / 4.0, rel=1e-14)

    def test_degenerate_q_raises(self):
        inst = LQRInstance(
            A=0.5 * np.eye(2), B=np.eye(2), Q=np.diag([1.0, 0.0]), R=np.eye(2), Sigma=np.eye(2)
        )
        with pytest.raises(DegenerateQ):
            dominance_bound(inst, np.zeros((2, 2)))

    def test_gradient_dominance_inequality(self):
        rng = np.random.default_rng(12)
        inst = make_instance(4, 2, 52)
        opt = optimal_solution(inst, np.zeros((2, 4)))
        tau = dominance_coefficient(inst, opt)
        db0 = dominance_bound(inst, np.zeros((2, 4)))
        assert tau <= db0.tau_bound
        for _ in range(100):
            K = random_stabilizing_gain(inst, rng)
            c = certify(inst, K)
            gap = c.cost - opt.f_star
            assert gap <= tau * np.linalg.norm(c.grad) ** 2 + 1e-10 * opt.f_star

    def test_coercive_along_ray_to_boundary(self, golden):
        # rho(A - B*1.0) = 1 for the golden instance; approach it geometrically.
        k_stab, k_bound = 1.5, 1.0
        for k_exp in range(1, 30):
            t = 1.0 - 2.0**-k_exp
            k = (1 - t) * k_stab + t * k_bound
            if certify(golden, [[k]]).cost > 1e6:
                assert t < 1.0
                return
        pytest.fail("cost never exceeded the threshold before the boundary")

    def test_coercive_lower_bound_in_gain(self):
        rng = np.random.default_rng(13)
        inst = make_instance(3, 2, 53)
        lam_sig = np.linalg.eigvalsh(inst.Sigma)[0]
        lam_r = np.linalg.eigvalsh(inst.R)[0]
        for _ in range(20):
            K = random_stabilizing_gain(inst, rng, scale=0.5)
            c = certify(inst, K)
            assert c.cost >= lam_sig * lam_r * np.linalg.norm(K) ** 2 - 1e-10


class TestOptimalSolution:
    def test_golden_closed_form(self, golden):
        opt = optimal_solution(golden, [[1.5]])
        assert opt.K_star[0, 0] == pytest.approx(PHI, abs=1e-12)
        assert opt.X_star[0, 0] == pytest.approx(2.0 + math.sqrt(5.0), abs=1e-12)
        assert opt.are_residual <= 1e-9 * (1 + np.linalg.norm(opt.X_star))

    def test_zero_dynamics(self):
        inst = LQRInstance(A=np.zeros((2, 2)), B=np.eye(2), Q=np.eye(2), R=np.eye(2), Sigma=np.eye(2))
        opt = optimal_solution(inst, np.zeros((2, 2)))
        assert np.allclose(opt.K_star, 0.0, atol=1e-12)
        assert np.allclose(opt.X_star, inst.Q, atol=1e-12)

    def test_stationarity_on_random_instances(self):
        for seed in range(4):
            inst = make_instance(5, 5, seed + 60, identity_costs=True)
            opt = optimal_solution(inst, np.zeros((5, 5)))
            c = certify(inst, opt.K_star)
            assert np.linalg.norm(c.grad) <= 1e-8 * (1 + np.linalg.norm(opt.K_star))
            assert opt.are_residual <= 1e-9 * (1 + np.linalg.norm(opt.X_star))
            assert spectral_radius(inst.A - inst.B @ opt.K_star) < 1.0

    def test_rejects_unstable_start(self, golden):
        with pytest.raises(NotSchurStable):
            optimal_solution(golden, [[0.0]])


class TestSerialization:
    def test_json_round_trip_exact(self, tmp_path):
        inst = make_instance(4, 2, 70)
        path = tmp_path / "instance.json"
        inst.save(path)
        loaded = LQRInstance.load(path)
        for field in ("A", "B", "Q", "R", "Sigma"):
            assert np.array_equal(getattr(inst, field), getattr(loaded, field))

    def test_schema_fields(self, tmp_path):
        inst = make_instance(3, 2, 71)
        path = tmp_path / "instance.json"
        inst.save(path)
        data = json.loads(path.read_text())
        assert set(data) == {"n", "m", "A", "B", "Q", "R", "Sigma"}
        assert data["n"] == 3 and data["m"] == 2
        assert len(data["A"]) == 3 and len(data["A"][0]) == 3
