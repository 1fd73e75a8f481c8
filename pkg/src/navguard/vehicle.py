"""Planar vehicle kinematics on an 11-component navigation state.

State order (used by every vector and matrix in the package)::

    0 x        east position (m)
    1 y        north position (m)
    2 theta    yaw (rad)
    3 vx       body-x velocity (m/s)
    4 vy       body-y velocity (m/s)
    5 thetadot yaw rate (rad/s)
    6 ax       body-x acceleration (m/s^2)
    7 ay       body-y acceleration (m/s^2)
    8 b_thetadot  gyro bias (rad/s)
    9 b_ax        x-accelerometer bias (m/s^2)
    10 b_ay       y-accelerometer bias (m/s^2)

Measurement order: ``[y_x, y_y, y_theta, y_thetadot, y_ax, y_ay]``.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np

from .errors import EmptyRoute, NonFiniteState
from .statespace import LtiModel

X, Y, THETA, VX, VY, THETA_DOT, AX, AY, B_THETA_DOT, B_AX, B_AY = range(11)
N_STATES = 11
N_MEAS = 6

STATE_NAMES = ("x", "y", "theta", "vx", "vy", "thetadot", "ax", "ay",
               "b_thetadot", "b_ax", "b_ay")
MEAS_NAMES = ("yx", "yy", "ytheta", "ythetadot", "yax", "yay")
GNSS_CHANNELS = (0, 1)
INS_CHANNELS = (2, 3, 4, 5)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    theta_dot: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    b_theta_dot: float = 0.0
    b_ax: float = 0.0
    b_ay: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (N_STATES,):
            raise ValueError(f"expected an {N_STATES}-vector, got shape {arr.shape}")
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    capture_radius: float = 1.0

    def __post_init__(self):
        if not self.capture_radius > 0:
            raise ValueError(f"capture_radius must be positive, got {self.capture_radius}")


@dataclass(frozen=True)
class VelocityCommand:
    v_forward: float = 0.0
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class ControllerConfig:
    """Waypoint guidance gains and the actuator model used by the truth loop.

    ``k_accel`` and ``accel_max`` shape how a velocity command becomes an
    acceleration; they are not part of the guidance law itself.
    """

    k_heading: float = 1.5
    k_speed: float = 0.5
    v_max: float = 8.0
    yaw_rate_max: float = 0.5
    k_accel: float = 1.0
    accel_max: float = 2.0


def transition(x: np.ndarray, T: float) -> np.ndarray:
    """Discrete kinematics on a raw state vector."""
    c, s = math.cos(x[THETA]), math.sin(x[THETA])
    out = x.copy()
    out[X] = x[X] + T * x[VX] * c - T * x[VY] * s
    out[Y] = x[Y] + T * x[VX] * s + T * x[VY] * c
    out[THETA] = wrap_angle(x[THETA] + T * x[THETA_DOT])
    out[VX] = x[VX] + T * x[AX]
    out[VY] = x[VY] + T * x[AY]
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("propagation produced a non-finite state")
    return out


def transition_jacobian(x: np.ndarray, T: float) -> np.ndarray:
    c, s = math.cos(x[THETA]), math.sin(x[THETA])
    F = np.eye(N_STATES)
    F[X, THETA] = -T * x[VX] * s - T * x[VY] * c
    F[X, VX] = T * c
    F[X, VY] = -T * s
    F[Y, THETA] = T * x[VX] * c - T * x[VY] * s
    F[Y, VX] = T * s
    F[Y, VY] = T * c
    F[THETA, THETA_DOT] = T
    F[VX, AX] = T
    F[VY, AY] = T
    return F


def propagate(state: VehicleState, T: float) -> VehicleState:
    """Advance ``state`` by one sample period with no process noise."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    return VehicleState.from_array(transition(state.to_array(), T))


def state_jacobian(state: VehicleState, T: float) -> np.ndarray:
    """11x11 Jacobian of :func:`propagate` at ``state``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    return transition_jacobian(state.to_array(), T)


_H = np.zeros((N_MEAS, N_STATES))
for _row, _cols in enumerate(((X,), (Y,), (THETA,), (THETA_DOT, B_THETA_DOT),
                              (AX, B_AX), (AY, B_AY))):
    _H[_row, list(_cols)] = 1.0
_H.setflags(write=False)


def measurement_jacobian() -> np.ndarray:
    """The constant 6x11 output matrix (the measurement model is linear)."""
    return _H


def measurement_map(state: VehicleState) -> np.ndarray:
    s = state
    return np.array([s.x, s.y, s.theta, s.theta_dot + s.b_theta_dot,
                     s.ax + s.b_ax, s.ay + s.b_ay])


def linearized_model(state: VehicleState, T: float, Q, R) -> LtiModel:
    """Local LTI model at ``state``; B is empty since the kinematics have no input."""
    return LtiModel(A=state_jacobian(state, T), B=np.zeros((N_STATES, 1)),
                    C=measurement_jacobian(), Q=Q, R=R)


def _clamp(v, limit):
    return max(-limit, min(limit, v))


def waypoint_controller(state, route, active=0, limits: ControllerConfig = ControllerConfig()):
    """Proportional guidance toward the active waypoint.

    ``state`` may be a VehicleState or a state vector. Returns the command
    and the (possibly advanced) active waypoint index; once the index runs
    past the last waypoint the command is zero.
    """
    if not route:
        raise EmptyRoute("route must contain at least one waypoint")
    if isinstance(state, VehicleState):
        px, py, theta = state.x, state.y, state.theta
    else:
        px, py, theta = state[X], state[Y], state[THETA]

    while active < len(route):
        wp = route[active]
        dist = math.hypot(wp.x - px, wp.y - py)
        if dist > wp.capture_radius:
            break
        active += 1
    else:
        return VelocityCommand(0.0, 0.0), active

    bearing_err = wrap_angle(math.atan2(wp.y - py, wp.x - px) - theta)
    yaw_rate = _clamp(limits.k_heading * bearing_err, limits.yaw_rate_max)
    v_forward = min(limits.v_max, limits.k_speed * dist)
    return VelocityCommand(v_forward, yaw_rate), active


def command_input(xhat: np.ndarray, cmd: VelocityCommand,
                  limits: ControllerConfig = ControllerConfig()) -> np.ndarray:
    """Additive state input realizing ``cmd`` from the navigation estimate.

    The increment sets the estimated yaw rate to the command, drives body-x
    acceleration toward closing the speed error, and damps lateral velocity.
    It is applied identically to truth and filter, so it is a known input.
    """
    u = np.zeros(N_STATES)
    u[THETA_DOT] = cmd.yaw_rate - xhat[THETA_DOT]
    u[AX] = _clamp(limits.k_accel * (cmd.v_forward - xhat[VX]), limits.accel_max) - xhat[AX]
    u[AY] = _clamp(-limits.k_accel * xhat[VY], limits.accel_max) - xhat[AY]
    return u
