import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from navguard.ekf import (
    EkfState, average_nis, average_nis_band, ekf_predict, ekf_update, initial_state, innovation,
    residual_statistics,
)
from navguard.errors import InsufficientData, SingularInnovation
from navguard.scenario import run_scenario
from navguard.sensors import AttackSpec
from navguard.vehicle import AX, THETA, VX, measurement_jacobian, transition_jacobian

from conftest import attack_free, noiseless

T = 0.1
H = measurement_jacobian()


class TestPredict:
    def test_origin_stays_put(self):
        P = np.diag(np.arange(1.0, 12.0))
        out = ekf_predict(EkfState(np.zeros(11), P), np.zeros((11, 11)), T)
        F = transition_jacobian(np.zeros(11), T)
        assert np.array_equal(out.xhat, np.zeros(11))
        assert np.allclose(out.P, F @ P @ F.T, rtol=0, atol=1e-15)

    def test_covariance_injection(self):
        out = ekf_predict(EkfState(np.zeros(11), np.zeros((11, 11))), np.eye(11), T)
        assert np.array_equal(out.P, np.eye(11))

    def test_velocity_variance_growth(self):
        P = np.diag(np.linspace(0.5, 2.0, 11))
        Q = np.diag(np.full(11, 0.01))
        out = ekf_predict(EkfState(np.zeros(11), P), Q, T)
        assert out.P[VX, VX] == pytest.approx(P[VX, VX] + Q[VX, VX] + T ** 2 * P[AX, AX])

    def test_known_input_shifts_mean_only(self):
        P = np.eye(11)
        u = np.zeros(11)
        u[5] = 0.2
        a = ekf_predict(EkfState(np.zeros(11), P), np.zeros((11, 11)), T)
        b = ekf_predict(EkfState(np.zeros(11), P), np.zeros((11, 11)), T, u)
        assert np.array_equal(a.P, b.P)
        assert b.xhat[5] == 0.2

    def test_k_unchanged(self):
        assert ekf_predict(EkfState(np.zeros(11), np.eye(11), k=7), np.eye(11), T).k == 7


class TestUpdate:
    def test_zero_innovation(self):
        xhat = np.linspace(-1, 1, 11)
        state = EkfState(xhat, np.eye(11), k=3)
        out, res = ekf_update(state, H @ xhat, np.eye(6))
        assert np.allclose(res.r, 0, atol=1e-15)
        assert np.allclose(out.xhat, xhat, rtol=0, atol=1e-15)
        assert out.k == 4 and res.k == 3

    def test_distrusted_measurement(self):
        state = EkfState(np.zeros(11), np.eye(11))
        y = np.ones(6) / np.sqrt(6)
        out, _ = ekf_update(state, y, 1e9 * np.eye(6))
        assert np.linalg.norm(out.xhat) < 1e-6

    def test_scalar_position_update(self):
        state = EkfState(np.zeros(11), np.eye(11))
        y = np.zeros(6)
        y[0] = 1.0
        out, res = ekf_update(state, y, np.eye(6))
        # K on y_x is P_xx / (P_xx + R_xx) = 0.5
        assert out.xhat[0] == pytest.approx(0.5)
        assert out.P[0, 0] == pytest.approx(0.5)
        assert res.S[0, 0] == pytest.approx(2.0)
        assert res.r_norm[0] == pytest.approx(1 / np.sqrt(2))

    def test_standardized_and_nis(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((11, 11))
        state = EkfState(rng.standard_normal(11), M @ M.T + np.eye(11))
        y = rng.standard_normal(6)
        _, res = ekf_update(state, y, np.eye(6))
        assert np.allclose(res.r_norm, res.r / np.sqrt(np.diag(res.S)))
        assert res.nis == pytest.approx(res.r @ np.linalg.solve(res.S, res.r))

    def test_heading_innovation_wraps(self):
        xhat = np.zeros(11)
        xhat[THETA] = 3.1
        r = innovation(xhat, [0, 0, -3.1, 0, 0, 0])
        assert r[2] == pytest.approx(2 * np.pi - 6.2)

    def test_singular_innovation(self):
        state = EkfState(np.zeros(11), np.zeros((11, 11)))
        with pytest.raises(SingularInnovation):
            ekf_update(state, np.zeros(6), np.zeros((6, 6)))

    def test_rejects_nonfinite_measurement(self):
        with pytest.raises(ValueError):
            ekf_update(EkfState(np.zeros(11), np.eye(11)), [np.nan] * 6, np.eye(6))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, (11, 11), elements=st.floats(-3, 3)),
           arrays(float, (6, 6), elements=st.floats(-1, 1)),
           arrays(float, 6, elements=st.floats(-10, 10)))
    def test_joseph_keeps_psd(self, M, W, y):
        P = M @ M.T
        R = W @ W.T + 1e-3 * np.eye(6)
        out, _ = ekf_update(EkfState(np.zeros(11), P), y, R)
        assert np.array_equal(out.P, out.P.T)
        assert np.linalg.eigvalsh(out.P)[0] >= -1e-10 * max(1.0, np.abs(P).max())

    def test_initial_state_lift(self):
        s = initial_state([3.0, 4.0, 0.5, 9.0, 9.0, 9.0])
        assert s.xhat[:3].tolist() == [3.0, 4.0, 0.5]
        assert np.all(s.xhat[3:] == 0)
        assert s.P.shape == (11, 11)


class TestResidualStatistics:
    def test_constant_sequence(self):
        from navguard.ekf import Residual
        r = np.array([1.0, -2.0, 0.5, 0, 0, 3.0])
        seq = [Residual(k, r, np.eye(6), r, 0.0) for k in range(5)]
        mean, cov = residual_statistics(seq)
        assert np.array_equal(mean, r)
        assert np.allclose(cov, 0)

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            residual_statistics([])


def _residuals(cfg):
    log, _ = run_scenario(cfg)
    r = log.column("r")
    S = log.column("S_diag")
    return log, r, S


class TestClosedLoop:
    def test_h0_mean_and_nis(self, paper_cfg):
        log, r, S = _residuals(attack_free(paper_cfg, duration=100.0))
        n = len(r)
        mean = r.mean(axis=0)
        assert np.all(np.abs(mean) <= 4 * np.sqrt(S.mean(axis=0) / n))
        lo, hi = average_nis_band(n)
        assert lo <= float(np.mean(log.column("nis"))) <= hi

    def test_h0_standardized_variance(self, paper_cfg):
        log, _, _ = _residuals(attack_free(paper_cfg, duration=220.0))
        z = log.column("r_norm")[200:]
        assert len(z) >= 2000
        var = z.var(axis=0)
        assert np.all((0.85 <= var) & (var <= 1.15)), var

    def test_noiseless_residual_vanishes(self, paper_cfg):
        log, r, _ = _residuals(noiseless(attack_free(paper_cfg)))
        assert np.max(np.linalg.norm(r[100:], axis=1)) < 1e-6

    def test_attack_shifts_first_residual(self, paper_cfg):
        clean, r0, _ = _residuals(attack_free(paper_cfg))
        attacked, r1, _ = _residuals(paper_cfg)
        k = 400
        assert np.array_equal(r0[:k], r1[:k])
        shift = r1[k] - r0[k]
        assert shift[1] == pytest.approx(10.0, abs=1e-9)
        assert np.all(np.delete(shift, 1) == 0)

    def test_nis_band_values(self):
        lo, hi = average_nis_band(1, dof=6)
        assert lo == pytest.approx(1.2373, abs=1e-4)
        assert hi == pytest.approx(14.4494, abs=1e-4)
        lo, hi = average_nis_band(2000)
        assert lo < 6 < hi and hi - lo < 0.35
