import math

import numpy as np
import pytest
import scipy.linalg as la

from navguard.errors import DimensionMismatch, NoConvergence, NotDetectable, NotPsd
from navguard.statespace import (
    LtiModel, is_detectable, kalman_gain, predictor_gain, riccati_residual, solve_dare,
    steady_state_step, validate_model,
)

# positive root of P^2 + (r - a^2 r - q) P - q r = 0 for a=0.9, q=r=1
SCALAR_ROOT = 1.48389990267865


def scalar(a, c=1.0, q=1.0, r=1.0):
    return LtiModel(A=[[a]], B=[[0.0]], C=[[c]], Q=[[q]], R=[[r]])


def random_system(rng, n, m, radius=0.95, symmetric=False):
    if symmetric:
        M = rng.standard_normal((n, n))
        A = M + M.T
    else:
        A = rng.standard_normal((n, n))
    A *= radius / max(abs(np.linalg.eigvals(A)))
    C = rng.standard_normal((m, n))
    G = rng.standard_normal((n, n))
    W = rng.standard_normal((m, m))
    return LtiModel(A=A, B=np.zeros((n, 1)), C=C, Q=G @ G.T / n + 1e-3 * np.eye(n),
                    R=W @ W.T / m + 0.1 * np.eye(m))


def substitution_error(model, P):
    """Independent evaluation of the fixed-point equation with explicit inverses."""
    A, C, Q, R = model.A, model.C, model.Q, model.R
    rhs = A @ (P - P @ C.T @ np.linalg.inv(C @ P @ C.T + R) @ C @ P) @ A.T + Q
    return np.linalg.norm(P - rhs, np.inf) / (1 + np.linalg.norm(P, np.inf))


class TestValidateModel:
    def test_identity_covariances_accepted(self):
        model = LtiModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.eye(2), Q=np.eye(2), R=np.eye(2))
        assert validate_model(model) is model

    def test_zero_R_rejected(self):
        model = LtiModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.eye(2), Q=np.eye(2), R=np.zeros((2, 2)))
        with pytest.raises(NotPsd, match="R"):
            validate_model(model)

    def test_declared_m_contradicts_C(self):
        model = LtiModel(A=np.eye(11), B=np.zeros((11, 1)), C=np.zeros((6, 11)),
                         Q=np.eye(11), R=np.eye(5), m=5)
        with pytest.raises(DimensionMismatch, match="C"):
            validate_model(model)

    def test_indefinite_Q_rejected(self):
        model = LtiModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.eye(2),
                         Q=np.diag([1.0, -1.0]), R=np.eye(2))
        with pytest.raises(NotPsd, match="Q"):
            validate_model(model)

    def test_asymmetric_R_rejected(self):
        model = LtiModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.eye(2),
                         Q=np.eye(2), R=[[1.0, 0.1], [0.0, 1.0]])
        with pytest.raises(NotPsd, match="symmetric"):
            validate_model(model)

    def test_semidefinite_Q_allowed(self):
        model = LtiModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.eye(2),
                         Q=np.zeros((2, 2)), R=np.eye(2))
        validate_model(model)


class TestDetectability:
    def test_stable_without_output(self):
        assert is_detectable(0.5 * np.eye(2), np.zeros((1, 2)))

    def test_unobserved_unit_mode(self):
        assert not is_detectable(np.eye(2), [[1.0, 0.0]])

    def test_observed_unstable_mode(self):
        assert is_detectable(np.diag([1.1, 0.2]), [[1.0, 0.0]])

    def test_unobserved_unstable_mode(self):
        assert not is_detectable(np.diag([0.2, 1.1]), [[1.0, 0.0]])

    def test_vehicle_model_detectable(self):
        from navguard.vehicle import VehicleState, linearized_model
        model = linearized_model(VehicleState(theta=0.3, vx=5.0), 0.1, np.eye(11), np.eye(6))
        assert is_detectable(model.A, model.C)


class TestSolveDare:
    def test_zero_dynamics_gives_Q(self):
        sol = solve_dare(scalar(0.0, q=2.5, r=0.7))
        assert sol.P[0, 0] == pytest.approx(2.5, abs=1e-15)

    def test_scalar_closed_form(self):
        # tol bounds the residual, not the distance to the fixed point
        sol = solve_dare(scalar(0.9), tol=1e-12)
        assert abs(sol.P[0, 0] - SCALAR_ROOT) < 1e-10
        assert sol.K[0, 0] == pytest.approx(SCALAR_ROOT / (SCALAR_ROOT + 1.0), rel=1e-10)

    def test_random_four_state(self):
        model = random_system(np.random.default_rng(4), 4, 2)
        sol = solve_dare(model)
        assert substitution_error(model, sol.P) < 1e-9
        assert sol.residual_norm < 1e-10
        assert riccati_residual(model, sol.P) == pytest.approx(sol.residual_norm, rel=1e-6, abs=1e-15)

    def test_agrees_with_scipy_dual(self):
        model = random_system(np.random.default_rng(11), 5, 3)
        sol = solve_dare(model)
        ref = la.solve_discrete_are(model.A.T, model.C.T, model.Q, model.R)
        assert np.allclose(sol.P, ref, rtol=1e-8, atol=1e-10)

    def test_gain_identity(self):
        model = random_system(np.random.default_rng(5), 6, 4)
        sol = solve_dare(model)
        S = model.C @ sol.P @ model.C.T + model.R
        assert np.allclose(sol.K @ S, sol.P @ model.C.T, rtol=0, atol=1e-9)
        assert np.allclose(kalman_gain(model, sol.P), sol.K)

    def test_solution_is_symmetric_psd(self):
        model = random_system(np.random.default_rng(6), 6, 2)
        P = solve_dare(model).P
        assert np.max(np.abs(P - P.T)) < 1e-10
        assert np.linalg.eigvalsh(P)[0] >= -1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_tail(self, seed):
        # real closed-loop spectrum, so the iterate differences shrink geometrically
        model = random_system(np.random.default_rng(seed), 4, 2, symmetric=True)
        norms = solve_dare(model).step_norms
        tail = norms[-10:]
        assert len(tail) == 10
        assert all(b < a for a, b in zip(tail, tail[1:]))

    def test_not_detectable(self):
        model = LtiModel(A=np.eye(2), B=np.zeros((2, 1)), C=[[1.0, 0.0]], Q=np.eye(2), R=[[1.0]])
        with pytest.raises(NotDetectable):
            solve_dare(model)

    def test_no_convergence(self):
        with pytest.raises(NoConvergence):
            solve_dare(scalar(0.99), max_iter=3)

    def test_unstable_but_detectable(self):
        model = LtiModel(A=np.diag([1.2, 0.5]), B=np.zeros((2, 1)), C=[[1.0, 0.0]],
                         Q=np.eye(2), R=[[0.5]])
        sol = solve_dare(model)
        assert substitution_error(model, sol.P) < 1e-9
        Acl = model.A - predictor_gain(model, sol) @ model.C
        assert max(abs(np.linalg.eigvals(Acl))) < 1.0


class TestSteadyStateStep:
    def test_zero_innovation(self):
        model = random_system(np.random.default_rng(1), 3, 2)
        xhat = np.array([1.0, -2.0, 0.5])
        K = np.ones((3, 2))
        out = steady_state_step(model, K, xhat, [0.0], model.C @ xhat)
        assert np.allclose(out, model.A @ xhat, rtol=0, atol=1e-15)

    def test_zero_gain_is_open_loop(self):
        model = LtiModel(A=[[1.0, 0.1], [0.0, 1.0]], B=[[0.0], [1.0]], C=[[1.0, 0.0]],
                         Q=np.eye(2), R=[[1.0]])
        out = steady_state_step(model, np.zeros((2, 1)), [1.0, 2.0], [3.0], [100.0])
        assert np.allclose(out, [1.2, 5.0])

    def test_scalar_hand_arithmetic(self):
        model = LtiModel(A=[[1.0]], B=[[0.0]], C=[[1.0]], Q=[[1.0]], R=[[1.0]])
        assert steady_state_step(model, [[0.5]], [2.0], [0.0], [4.0])[0] == 3.0

    def test_shape_errors(self):
        model = scalar(0.5)
        with pytest.raises(DimensionMismatch):
            steady_state_step(model, [[0.5]], [1.0, 2.0], [0.0], [4.0])


def test_scalar_root_constant_is_closed_form():
    a, q, r = 0.9, 1.0, 1.0
    b = r - a * a * r - q
    assert SCALAR_ROOT == pytest.approx((-b + math.sqrt(b * b + 4 * q * r)) / 2, rel=1e-14)
