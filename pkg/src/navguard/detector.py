"""Per-channel CUSUM change detection on standardized innovation residuals.

Two update rules are available:

``standard``
    Page's two-sided test, ``S+ <- max(0, S+ + r - drift)`` and
    ``S- <- max(0, S- - r - drift)``.
``paper_literal``
    ``S <- max(0, S + |r|)`` with no drift term. Between resets the
    statistic can only grow, so under noise it alarms eventually no matter
    how large the threshold is; use it only over short horizons.

Thresholds are fixed per channel from a weighted sum of ``|r|`` over the
first ``calibration_len`` inputs. After an alarm the firing channel's
statistics reset to zero and monitoring continues with the same threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NotCalibrated, WindowTooShort
from .vehicle import N_MEAS

MODES = ("standard", "paper_literal")
TAU_FLOOR = 1e-6
H0 = "H0"
H1 = "H1"


@dataclass(frozen=True)
class CusumConfig:
    calibration_len: int = 10
    threshold_scale: float = 5.0
    drift: float = 0.5
    mode: str = "standard"
    channels: tuple[int, ...] = tuple(range(N_MEAS))
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(sorted({int(c) for c in self.channels})))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.calibration_len < 2:
            raise ValueError(f"calibration_len must be >= 2, got {self.calibration_len}")
        if not self.threshold_scale > 0:
            raise ValueError(f"threshold_scale must be > 0, got {self.threshold_scale}")
        if not self.drift >= 0:
            raise ValueError(f"drift must be >= 0, got {self.drift}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if any(not 0 <= c < N_MEAS for c in self.channels):
            raise ValueError(f"channels must lie in 0..{N_MEAS - 1}, got {self.channels}")
        if self.weights is not None and len(self.weights) != self.calibration_len:
            raise ValueError(f"weights needs {self.calibration_len} entries, got {len(self.weights)}")

    @property
    def channel_mask(self) -> np.ndarray:
        mask = np.zeros(N_MEAS, dtype=bool)
        mask[list(self.channels)] = True
        return mask


@dataclass(frozen=True)
class Decision:
    hypothesis: str = H0
    alarm_channel: int | None = None
    k_alpha: int | None = None

    def __post_init__(self):
        if (self.hypothesis == H1) != (self.k_alpha is not None):
            raise ValueError("k_alpha must be set exactly when the hypothesis is H1")

    @property
    def alarm(self) -> bool:
        return self.hypothesis == H1


@dataclass(frozen=True)
class CusumState:
    """Detector state after ``k`` inputs.

    ``stat`` holds each channel's statistic as computed at the latest step,
    before any reset, which is what gets compared with ``tau``; ``s_pos``
    and ``s_neg`` are the values carried into the next step.
    """

    s_pos: np.ndarray = field(default_factory=lambda: np.zeros(N_MEAS))
    s_neg: np.ndarray = field(default_factory=lambda: np.zeros(N_MEAS))
    tau: np.ndarray = field(default_factory=lambda: np.full(N_MEAS, np.nan))
    k: int = 0
    calibrated: bool = False
    history: tuple = ()
    stat: np.ndarray = field(default_factory=lambda: np.zeros(N_MEAS))
    fired: tuple[int, ...] = ()


def new_state() -> CusumState:
    return CusumState()


def calibrate(window, kappa: float, weights=None) -> np.ndarray:
    """Per-channel threshold ``kappa * sum_i w_i |r(i)|``, floored at TAU_FLOOR."""
    window = np.atleast_2d(np.asarray(window, dtype=float))
    if window.shape[0] < 2:
        raise WindowTooShort(f"calibration needs at least 2 samples, got {window.shape[0]}")
    w = np.ones(window.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (window.shape[0],):
        raise WindowTooShort(f"{w.size} weights for a window of {window.shape[0]} samples")
    tau = kappa * (w @ np.abs(window))
    return np.maximum(tau, TAU_FLOOR)


def decide(state: CusumState) -> Decision:
    """H1 if any channel fired at the latest step (lowest index wins)."""
    if state.fired:
        return Decision(H1, alarm_channel=min(state.fired), k_alpha=state.k - 1)
    return Decision(H0)


def cusum_step(state: CusumState, r, cfg: CusumConfig) -> tuple[CusumState, Decision]:
    """Consume one standardized residual vector at step ``state.k``."""
    if not state.calibrated:
        raise NotCalibrated("cusum_step called before calibration")
    r = np.asarray(r, dtype=float)
    mask = cfg.channel_mask
    if cfg.mode == "standard":
        s_pos = np.where(mask, np.maximum(0.0, state.s_pos + r - cfg.drift), 0.0)
        s_neg = np.where(mask, np.maximum(0.0, state.s_neg - r - cfg.drift), 0.0)
    else:
        s_pos = np.where(mask, np.maximum(0.0, state.s_pos + np.abs(r)), 0.0)
        s_neg = np.zeros(N_MEAS)
    stat = np.maximum(s_pos, s_neg)
    fire = mask & (stat > state.tau)
    s_pos[fire] = 0.0
    s_neg[fire] = 0.0
    new = replace(state, s_pos=s_pos, s_neg=s_neg, stat=stat, k=state.k + 1,
                  fired=tuple(int(c) for c in np.flatnonzero(fire)))
    return new, decide(new)


def observe(state: CusumState, r, cfg: CusumConfig) -> tuple[CusumState, Decision]:
    """Calibrate on the first inputs, then run :func:`cusum_step`.

    No alarm can be raised while the calibration window is filling.
    """
    if state.calibrated:
        return cusum_step(state, r, cfg)
    history = state.history + (np.array(r, dtype=float),)
    state = replace(state, history=history, k=state.k + 1, fired=())
    if len(history) == cfg.calibration_len:
        tau = calibrate(np.array(history), cfg.threshold_scale, cfg.weights)
        state = replace(state, tau=tau, calibrated=True)
    return state, Decision(H0)
