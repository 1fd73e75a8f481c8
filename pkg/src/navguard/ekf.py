"""Loosely coupled INS/GNSS extended Kalman filter and its innovation residuals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientData, NonFiniteState, SingularInnovation
from .vehicle import (
    N_MEAS, N_STATES, THETA, measurement_jacobian, transition, transition_jacobian, wrap_angle,
)

DEFAULT_P0_DIAG = (10.0, 10.0, 0.1, 1.0, 1.0, 0.1, 1.0, 1.0, 0.01, 0.1, 0.1)
HEADING_CHANNEL = 2

_I = np.eye(N_STATES)


@dataclass(frozen=True)
class EkfState:
    xhat: np.ndarray
    P: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class Residual:
    """Innovation at step ``k`` and its predicted covariance ``S``."""

    k: int
    r: np.ndarray
    S: np.ndarray
    r_norm: np.ndarray
    nis: float


def initial_state(y0, P0_diag=DEFAULT_P0_DIAG) -> EkfState:
    """Lift a first measurement to a state estimate.

    Position and heading come straight from the measurement; every other
    component starts at zero.
    """
    y0 = np.asarray(y0, dtype=float)
    xhat = np.zeros(N_STATES)
    xhat[0], xhat[1] = y0[0], y0[1]
    xhat[THETA] = wrap_angle(y0[HEADING_CHANNEL])
    return EkfState(xhat=xhat, P=np.diag(np.asarray(P0_diag, dtype=float)), k=0)


def ekf_predict(state: EkfState, Q, T: float, u=None) -> EkfState:
    """Time update. ``u`` is an optional known additive state input."""
    F = transition_jacobian(state.xhat, T)
    xhat = transition(state.xhat, T)
    if u is not None:
        xhat = xhat + u
    P = F @ state.P @ F.T + Q
    P = 0.5 * (P + P.T)
    if not (np.all(np.isfinite(xhat)) and np.all(np.isfinite(P))):
        raise NonFiniteState("EKF prediction diverged", step=state.k)
    return EkfState(xhat=xhat, P=P, k=state.k)


def innovation(xhat, y) -> np.ndarray:
    """``y - H xhat`` with the heading channel wrapped to (-pi, pi]."""
    r = np.asarray(y, dtype=float) - measurement_jacobian() @ xhat
    r[HEADING_CHANNEL] = wrap_angle(r[HEADING_CHANNEL])
    return r


def ekf_update(state: EkfState, y, R) -> tuple[EkfState, Residual]:
    """Measurement update with the Joseph-form covariance."""
    y = np.asarray(y, dtype=float)
    if y.shape != (N_MEAS,) or not np.all(np.isfinite(y)):
        raise ValueError(f"measurement must be a finite {N_MEAS}-vector")
    H = measurement_jacobian()
    P = state.P
    r = innovation(state.xhat, y)
    S = H @ P @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(f"innovation covariance is not positive definite at step {state.k}") from exc
    PHt = P @ H.T
    K = np.linalg.solve(S, PHt.T).T
    xhat = state.xhat + K @ r
    xhat[THETA] = wrap_angle(xhat[THETA])
    IKH = _I - K @ H
    P_new = IKH @ P @ IKH.T + K @ R @ K.T
    P_new = 0.5 * (P_new + P_new.T)

    w = np.linalg.solve(L, r)
    resid = Residual(k=state.k, r=r, S=S, r_norm=r / np.sqrt(np.diag(S)), nis=float(w @ w))
    return EkfState(xhat=xhat, P=P_new, k=state.k + 1), resid


def residual_statistics(residuals) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance of a residual sequence."""
    residuals = list(residuals)
    if len(residuals) < 2:
        raise InsufficientData(f"need at least 2 residuals, got {len(residuals)}")
    R = np.array([res.r for res in residuals])
    return R.mean(axis=0), np.cov(R, rowvar=False, ddof=1)


def average_nis(residuals) -> float:
    return float(np.mean([res.nis for res in residuals]))


def average_nis_band(n_samples: int, dof: int = N_MEAS, confidence: float = 0.95):
    """Two-sided acceptance interval for the mean NIS of ``n_samples`` innovations.

    The sum of ``n`` independent chi-square(dof) values is chi-square(n dof).
    """
    alpha = 1.0 - confidence
    total = n_samples * dof
    lo = stats.chi2.ppf(alpha / 2, total) / n_samples
    hi = stats.chi2.ppf(1 - alpha / 2, total) / n_samples
    return float(lo), float(hi)
