"""Discrete LTI state-space models and steady-state Kalman machinery.

The model is

    x(k+1) = A x(k) + B u(k) + v(k),    v ~ N(0, Q)
    y(k)   = C x(k) + w(k),             w ~ N(0, R)

and the steady-state error covariance is the fixed point of

    P = A [P - P C^T (C P C^T + R)^-1 C P] A^T + Q,

solved here by straightforward iteration of that map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, NoConvergence, NotDetectable, NotPsd

SYMMETRY_RTOL = 1e-12
DETECTABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class LtiModel:
    """State-space matrices with their declared dimensions.

    ``n``, ``r`` and ``m`` default to the sizes implied by ``A``, ``B`` and
    ``C``; declaring them explicitly lets :func:`validate_model` catch a
    contradiction between the declaration and the arrays.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    n: int | None = None
    r: int | None = None
    m: int | None = None

    def __post_init__(self):
        for name in ("A", "B", "C", "Q", "R"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.n is None:
            object.__setattr__(self, "n", self.A.shape[0])
        if self.r is None:
            object.__setattr__(self, "r", self.B.shape[1])
        if self.m is None:
            object.__setattr__(self, "m", self.C.shape[0])


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    iterations: int
    residual_norm: float
    # relative change between consecutive iterates, one entry per iteration
    step_norms: tuple[float, ...] = field(default=(), repr=False)


def _check_shape(name, arr, shape):
    if arr.shape != shape:
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")


def _is_symmetric(M):
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 0.0)
    return float(np.max(np.abs(M - M.T))) <= SYMMETRY_RTOL * scale


def validate_model(model: LtiModel) -> LtiModel:
    """Return ``model`` unchanged if its shapes and covariances are consistent.

    Raises DimensionMismatch or NotPsd naming the offending matrix.
    """
    n, r, m = model.n, model.r, model.m
    _check_shape("A", model.A, (n, n))
    _check_shape("B", model.B, (n, r))
    _check_shape("C", model.C, (m, n))
    _check_shape("Q", model.Q, (n, n))
    _check_shape("R", model.R, (m, m))
    for name in ("A", "B", "C", "Q", "R"):
        if not np.all(np.isfinite(getattr(model, name))):
            raise DimensionMismatch(f"{name} contains non-finite entries")

    for name, strict in (("Q", False), ("R", True)):
        M = getattr(model, name)
        if not _is_symmetric(M):
            raise NotPsd(f"{name} is not symmetric")
        eig = np.linalg.eigvalsh(M)
        scale = max(1.0, float(np.max(np.abs(eig))))
        if strict:
            if eig[0] <= 0.0:
                raise NotPsd(f"{name} is not positive definite (min eigenvalue {eig[0]:.3g})")
        elif eig[0] < -SYMMETRY_RTOL * scale:
            raise NotPsd(f"{name} is not positive semi-definite (min eigenvalue {eig[0]:.3g})")
    return model


def is_detectable(A, C) -> bool:
    """PBH test: every mode with ``|lambda| >= 1`` must be visible through C."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or C.shape[1] != n:
        raise DimensionMismatch(f"A {A.shape} and C {C.shape} are inconsistent")
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - DETECTABILITY_MARGIN:
            continue
        pbh = np.vstack([A - lam * np.eye(n), C.astype(complex)])
        if np.linalg.matrix_rank(pbh) < n:
            return False
    return True


def _innovation_factor(C, P, R):
    S = C @ P @ C.T + R
    try:
        return la.cho_factor(S, lower=True, check_finite=False)
    except la.LinAlgError as exc:
        raise NotPsd("C P C^T + R is not positive definite") from exc


def riccati_map(model: LtiModel, P: np.ndarray) -> np.ndarray:
    """One application of the Riccati recursion, symmetrized."""
    A, C = model.A, model.C
    cf = _innovation_factor(C, P, model.R)
    PCt = P @ C.T
    inner = P - PCt @ la.cho_solve(cf, PCt.T, check_finite=False)
    nxt = A @ inner @ A.T + model.Q
    return 0.5 * (nxt + nxt.T)


def kalman_gain(model: LtiModel, P: np.ndarray) -> np.ndarray:
    """``K = P C^T (C P C^T + R)^-1``."""
    cf = _innovation_factor(model.C, P, model.R)
    PCt = P @ model.C.T
    return la.cho_solve(cf, PCt.T, check_finite=False).T


def predictor_gain(model: LtiModel, solution: RiccatiSolution) -> np.ndarray:
    """Gain of the one-step predictor form, ``A K``, for which the error
    dynamics are ``e(k+1) = (A - A K C) e(k)``."""
    return model.A @ solution.K


def riccati_residual(model: LtiModel, P: np.ndarray) -> float:
    """``||P - map(P)||_inf / (1 + ||P||_inf)``."""
    diff = P - riccati_map(model, P)
    return float(np.linalg.norm(diff, np.inf) / (1.0 + np.linalg.norm(P, np.inf)))


def solve_dare(model: LtiModel, tol: float = 1e-10, max_iter: int = 10_000) -> RiccatiSolution:
    """Iterate the Riccati map from ``P0 = Q`` until the residual drops below ``tol``."""
    validate_model(model)
    if not is_detectable(model.A, model.C):
        raise NotDetectable("(A, C) is not detectable")

    P = np.array(model.Q, dtype=float)
    norms = []
    for it in range(max_iter + 1):
        nxt = riccati_map(model, P)
        res = float(np.linalg.norm(P - nxt, np.inf) / (1.0 + np.linalg.norm(P, np.inf)))
        if res < tol:
            return RiccatiSolution(
                P=P, K=kalman_gain(model, P), iterations=it,
                residual_norm=res, step_norms=tuple(norms),
            )
        norms.append(res)
        P = nxt
    raise NoConvergence(f"Riccati iteration did not reach tol={tol:g} in {max_iter} iterations "
                        f"(last residual {norms[-1]:.3g})")


def steady_state_step(model: LtiModel, K, xhat, u, y) -> np.ndarray:
    """``A xhat + B u + K (y - C xhat)``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_shape("K", K, (model.n, model.m))
    _check_shape("xhat", xhat, (model.n,))
    _check_shape("u", u, (model.r,))
    _check_shape("y", y, (model.m,))
    return model.A @ xhat + model.B @ u + K @ (y - model.C @ xhat)
