"""Simulated GNSS + INS sensor suite and additive attack injection.

Randomness comes from :class:`GaussianStream`: uniforms from numpy's
counter-based Philox generator, turned into normals by the Box-Muller
transform. Only this module draws random numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NotPsd
from .vehicle import N_MEAS, measurement_jacobian

DEFAULT_NOISE_STD = (0.5, 0.5, 0.01, 0.01, 0.05, 0.05)
DEFAULT_BIAS = (0.0, 0.0, 0.0, 0.02, 0.1, 0.1)

PROFILES = ("step", "ramp", "none")


class GaussianStream:
    """Deterministic standard-normal stream.

    Each call to :meth:`normals` consumes ``2 * ceil(n / 2)`` uniforms, so
    the stream position depends only on the sequence of requested sizes.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))
        self.draws = 0

    def uniforms(self, n: int) -> np.ndarray:
        self.draws += n
        return self._gen.random(n)

    def normals(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:pairs]))  # 1 - u lies in (0, 1]
        angle = 2.0 * math.pi * u[pairs:]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n]


def _vec6(name, values):
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (N_MEAS,):
        raise ValueError(f"{name} must have {N_MEAS} entries, got {arr.size}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SensorSuiteConfig:
    noise_std: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_NOISE_STD))
    bias: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_BIAS))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "noise_std", _vec6("noise_std", self.noise_std))
        object.__setattr__(self, "bias", _vec6("bias", self.bias))
        if np.any(self.noise_std < 0) or not np.all(np.isfinite(self.noise_std)):
            raise ValueError("noise_std must be finite and non-negative")
        if not np.all(np.isfinite(self.bias)):
            raise ValueError("bias must be finite")


@dataclass(frozen=True)
class AttackSpec:
    """Additive attack on one stacked output channel.

    ``step`` adds ``magnitude`` from ``start_time`` on; ``ramp`` adds
    ``slope * (t - start_time)``; ``none`` leaves the stream untouched.
    """

    channel: int
    start_time: float
    magnitude: float = 0.0
    profile: str = "step"
    slope: float = 0.0

    def __post_init__(self):
        if not 0 <= self.channel < N_MEAS:
            raise ValueError(f"attack channel must be in 0..{N_MEAS - 1}, got {self.channel}")
        if not self.start_time >= 0:
            raise ValueError(f"attack start_time must be >= 0, got {self.start_time}")
        if self.profile not in PROFILES:
            raise ValueError(f"attack profile must be one of {PROFILES}, got {self.profile!r}")

    def offset(self, t: float) -> float:
        """Value of the attack signal at time ``t`` (zero before onset)."""
        if self.profile == "none" or t < self.start_time:
            return 0.0
        if self.profile == "step":
            return self.magnitude
        return self.slope * (t - self.start_time)

    def active(self, t: float) -> bool:
        return self.profile != "none" and t >= self.start_time


def single_attack(attacks) -> AttackSpec | None:
    """Reduce a collection of attacks to at most one; several is an error."""
    attacks = [a for a in (attacks or ()) if a is not None]
    if len(attacks) > 1:
        channels = sorted({a.channel for a in attacks})
        raise ValueError(f"only one sensor may be attacked at a time, got {len(attacks)} "
                         f"attacks on channels {channels}")
    return attacks[0] if attacks else None


@dataclass(frozen=True)
class Measurement:
    """What the filter and detector see: no attack annotation."""

    k: int
    t: float
    y: np.ndarray


@dataclass(frozen=True)
class MeasurementSample:
    k: int
    t: float
    y: np.ndarray
    attacked: bool = False

    def observed(self) -> Measurement:
        return Measurement(self.k, self.t, self.y)


def sample_measurement(truth, cfg: SensorSuiteConfig, rng: GaussianStream, k: int,
                       T: float = 0.1) -> MeasurementSample:
    """Noisy, biased 6-channel output for the true state ``truth``.

    The configured biases add to whatever bias the truth state carries;
    channels 0..2 have no bias state, so their bias is a plain offset.
    """
    x = truth.to_array() if hasattr(truth, "to_array") else np.asarray(truth, dtype=float)
    y = measurement_jacobian() @ x + cfg.bias + cfg.noise_std * rng.normals(N_MEAS)
    return MeasurementSample(k=k, t=k * T, y=y, attacked=False)


def inject_attack(sample: MeasurementSample, attack: AttackSpec | None,
                  T: float = 0.1) -> MeasurementSample:
    """Add the attack signal to its channel once the attack is active.

    Uses the step index for timing so that ``t = k T`` round-off cannot shift
    the onset by a sample.
    """
    if attack is None:
        return sample
    t = sample.k * T
    if attack.profile == "none" or sample.k < attack_onset_step(attack, T):
        return sample
    y = np.array(sample.y, dtype=float)
    y[attack.channel] += attack.offset(max(t, attack.start_time))
    return replace(sample, y=y, attacked=True)


def attack_onset_step(attack: AttackSpec, T: float) -> int:
    """First step index at which the attack is active."""
    # rounding first keeps 40.0 / 0.1 from landing on step 401
    return math.ceil(round(attack.start_time / T, 9))


def psd_factor(Q) -> np.ndarray:
    """``L`` with ``L L^T = Q`` via a clipped eigendecomposition."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[0] != Q.shape[1]:
        raise NotPsd(f"Q must be square, got shape {Q.shape}")
    scale = max(1.0, float(np.max(np.abs(Q))) if Q.size else 0.0)
    if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12 * scale:
        raise NotPsd("Q is not symmetric")
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    if w.size and w[0] < -1e-12 * scale:
        raise NotPsd(f"Q is not positive semi-definite (min eigenvalue {w[0]:.3g})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def process_noise_sample(Q, rng: GaussianStream, factor=None) -> np.ndarray:
    """Draw ``nu ~ N(0, Q)``; pass a precomputed ``factor`` in hot loops."""
    L = psd_factor(Q) if factor is None else factor
    return L @ rng.normals(L.shape[0])

