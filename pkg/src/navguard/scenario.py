"""Closed-loop simulation harness: controller, truth, sensors, attack, EKF, CUSUM.

One step ``k`` of :func:`run_scenario`:

1. waypoint command from the previous estimate, turned into a known input ``u``
2. truth ``x <- f(x) + u + nu``; filter prediction with the same ``u``
3. sensor sample, then attack injection (the only place the attack is read)
4. EKF update, standardized residual, CUSUM calibration or step
5. log record

Step 0 skips 1-2 and initializes the filter from the first measurement.
"""
from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import detector as det
from .ekf import DEFAULT_P0_DIAG, ekf_predict, ekf_update, initial_state
from .errors import ConfigInvalid, NavguardError, NonFiniteState, RunFailed
from .sensors import (
    AttackSpec, GaussianStream, SensorSuiteConfig, attack_onset_step, inject_attack, psd_factor,
    sample_measurement,
)
from .vehicle import (
    MEAS_NAMES, N_MEAS, N_STATES, STATE_NAMES, THETA, ControllerConfig, Waypoint, command_input,
    transition, waypoint_controller, wrap_angle,
)

DEFAULT_Q_DIAG = (1e-3, 1e-3, 1e-6, 1e-3, 1e-3, 1e-5, 1e-3, 1e-3, 1e-8, 1e-7, 1e-7)


@dataclass(frozen=True)
class FilterConfig:
    """Noise model shared by the truth simulation and the EKF.

    ``Q`` is the per-step process-noise variance on each state; the truth
    is driven by exactly this noise. ``R`` is the measurement variance the
    filter assumes; ``None`` means the sensor suite's ``noise_std**2``,
    floored so the filter stays well posed with noiseless sensors.
    """

    Q: tuple[float, ...] = DEFAULT_Q_DIAG
    R: tuple[float, ...] | None = None
    P0: tuple[float, ...] = DEFAULT_P0_DIAG

    def __post_init__(self):
        for name, size in (("Q", N_STATES), ("P0", N_STATES), ("R", N_MEAS)):
            val = getattr(self, name)
            if val is None:
                continue
            val = tuple(float(v) for v in val)
            if len(val) != size:
                raise ValueError(f"filter.{name} needs {size} entries, got {len(val)}")
            if any(not math.isfinite(v) or v < 0 for v in val):
                raise ValueError(f"filter.{name} entries must be finite and >= 0")
            object.__setattr__(self, name, val)
        if self.R is not None and min(self.R) <= 0:
            raise ValueError("filter.R entries must be > 0")

    def R_matrix(self, sensor: SensorSuiteConfig) -> np.ndarray:
        if self.R is not None:
            return np.diag(self.R)
        return np.diag(np.maximum(np.asarray(sensor.noise_std) ** 2, 1e-8))


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float
    T: float = 0.1
    route: tuple[Waypoint, ...] = ()
    sensor: SensorSuiteConfig = field(default_factory=SensorSuiteConfig)
    attack: AttackSpec | None = None
    filter: FilterConfig = field(default_factory=FilterConfig)
    detector: det.CusumConfig = field(default_factory=det.CusumConfig)
    seed: int = 0
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        problems = []
        if not (isinstance(self.duration, (int, float)) and self.duration > 0):
            problems.append(f"scenario.duration must be > 0, got {self.duration!r}")
        if not (isinstance(self.T, (int, float)) and self.T > 0):
            problems.append(f"scenario.T must be > 0, got {self.T!r}")
        elif not problems:
            steps = self.duration / self.T
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                problems.append(f"scenario.duration / scenario.T = {steps:g} is not an integer")
        if not self.route:
            problems.append("scenario.route must contain at least one waypoint")
        if len(self.start) != 3:
            problems.append("scenario.start must be [x, y, theta]")
        if problems:
            raise ConfigInvalid(problems)
        object.__setattr__(self, "route", tuple(self.route))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "sensor", replace(self.sensor, seed=int(self.seed)))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.T))

    @property
    def attack_step(self) -> int | None:
        """Onset step of the attack, or None when no attack falls inside the run."""
        a = self.attack
        if a is None or a.profile == "none":
            return None
        k = attack_onset_step(a, self.T)
        return k if k < self.n_steps else None

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class StepRecord:
    k: int
    t: float
    truth: np.ndarray
    y: np.ndarray
    attacked: bool
    xhat: np.ndarray
    r: np.ndarray
    r_norm: np.ndarray
    stat: np.ndarray
    tau: np.ndarray
    decision: det.Decision
    # not written to CSV
    S_diag: np.ndarray | None = None
    nis: float = math.nan


@dataclass
class SimLog:
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records])

    @property
    def alarm_times(self) -> list[int]:
        return [rec.decision.k_alpha for rec in self.records if rec.decision.alarm]


@dataclass(frozen=True)
class Metrics:
    detection_delay_steps: int | None
    false_alarm_count: int
    position_rmse: float
    alarm_times: tuple[int, ...]
    attack_step: int | None = None
    alarm_channels: tuple[int, ...] = ()

    def as_dict(self) -> dict:
        return {
            "detection_delay_steps": self.detection_delay_steps,
            "false_alarm_count": self.false_alarm_count,
            "position_rmse": self.position_rmse,
            "alarm_times": list(self.alarm_times),
            "attack_step": self.attack_step,
            "alarm_channels": list(self.alarm_channels),
        }


def run_scenario(cfg: ScenarioConfig, n_steps: int | None = None) -> tuple[SimLog, Metrics]:
    """Simulate ``cfg``; ``n_steps`` truncates the run (for causality checks)."""
    steps = cfg.n_steps if n_steps is None else min(n_steps, cfg.n_steps)
    T = cfg.T
    rng = GaussianStream(cfg.seed)
    Q = np.diag(cfg.filter.Q)
    L_q = psd_factor(Q)
    R = cfg.filter.R_matrix(cfg.sensor)
    dcfg = cfg.detector

    truth = np.zeros(N_STATES)
    truth[0], truth[1], truth[THETA] = cfg.start[0], cfg.start[1], wrap_angle(cfg.start[2])
    est = None
    dstate = det.new_state()
    active = 0
    log = SimLog()

    for k in range(steps):
        try:
            if k > 0:
                cmd, active = waypoint_controller(est.xhat, cfg.route, active, cfg.controller)
                u = command_input(est.xhat, cmd, cfg.controller)
                truth = transition(truth, T) + u + L_q @ rng.normals(N_STATES)
                truth[THETA] = wrap_angle(truth[THETA])
                est = ekf_predict(est, Q, T, u)
            sample = inject_attack(sample_measurement(truth, cfg.sensor, rng, k, T), cfg.attack, T)
            meas = sample.observed()
            if est is None:
                est = initial_state(meas.y, cfg.filter.P0)
            est, res = ekf_update(est, meas.y, R)
        except NonFiniteState as exc:
            raise NonFiniteState(str(exc), step=k) from exc
        dstate, decision = det.observe(dstate, res.r_norm, dcfg)
        log.records.append(StepRecord(
            k=k, t=k * T, truth=truth, y=sample.y, attacked=sample.attacked, xhat=est.xhat,
            r=res.r, r_norm=res.r_norm, stat=dstate.stat, tau=dstate.tau, decision=decision,
            S_diag=np.diag(res.S).copy(), nis=res.nis,
        ))
    return log, compute_metrics(log, cfg)


def compute_metrics(log: SimLog, cfg: ScenarioConfig, transient: int = 0) -> Metrics:
    """Score a log. ``transient`` leading steps are left out of the RMSE."""
    k_att = cfg.attack_step
    alarms = [(rec.decision.k_alpha, rec.decision.alarm_channel)
              for rec in log.records if rec.decision.alarm]
    times = tuple(a for a, _ in alarms)
    if k_att is None:
        false_alarms, delay = len(times), None
    else:
        false_alarms = sum(1 for a in times if a < k_att)
        post = [a for a in times if a >= k_att]
        delay = post[0] - k_att if post else None

    prefix = [rec for rec in log.records
              if rec.k >= transient and (k_att is None or rec.k < k_att)]
    if prefix:
        err = np.array([(rec.truth[0] - rec.xhat[0], rec.truth[1] - rec.xhat[1]) for rec in prefix])
        rmse = float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))
    else:
        rmse = math.nan
    return Metrics(detection_delay_steps=delay, false_alarm_count=false_alarms,
                   position_rmse=rmse, alarm_times=times, attack_step=k_att,
                   alarm_channels=tuple(c for _, c in alarms))


# --- CSV ---------------------------------------------------------------------

CSV_COLUMNS = (
    ["k", "t"]
    + [f"truth_{n}" for n in STATE_NAMES]
    + [f"meas_{n}" for n in MEAS_NAMES]
    + ["attacked"]
    + [f"est_{n}" for n in STATE_NAMES]
    + [f"resid_{n}" for n in MEAS_NAMES]
    + [f"resid_norm_{n}" for n in MEAS_NAMES]
    + [f"S_{n}" for n in MEAS_NAMES]
    + [f"tau_{n}" for n in MEAS_NAMES]
    + ["hypothesis", "alarm_channel", "k_alpha"]
)


def _num(v) -> str:
    # repr is the shortest string that round-trips the double exactly
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _opt(v) -> str:
    return "" if v is None else str(v)


def write_log_csv(log: SimLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in log.records:
            d = rec.decision
            writer.writerow(
                [rec.k, _num(rec.t)]
                + [_num(v) for v in rec.truth]
                + [_num(v) for v in rec.y]
                + [int(rec.attacked)]
                + [_num(v) for v in rec.xhat]
                + [_num(v) for v in rec.r]
                + [_num(v) for v in rec.r_norm]
                + [_num(v) for v in rec.stat]
                + [_num(v) for v in rec.tau]
                + [d.hypothesis, _opt(d.alarm_channel), _opt(d.k_alpha)]
            )


def read_log_csv(path) -> SimLog:
    """Parse a file written by :func:`write_log_csv` back into a SimLog."""

    def vec(row, prefix, names):
        return np.array([float(row[f"{prefix}_{n}"] or "nan") for n in names])

    log = SimLog()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is not None and list(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header")
        for row in reader:
            ch, ka = row["alarm_channel"], row["k_alpha"]
            decision = det.Decision(row["hypothesis"], int(ch) if ch else None,
                                    int(ka) if ka else None)
            log.records.append(StepRecord(
                k=int(row["k"]), t=float(row["t"]),
                truth=vec(row, "truth", STATE_NAMES), y=vec(row, "meas", MEAS_NAMES),
                attacked=row["attacked"] == "1", xhat=vec(row, "est", STATE_NAMES),
                r=vec(row, "resid", MEAS_NAMES), r_norm=vec(row, "resid_norm", MEAS_NAMES),
                stat=vec(row, "S", MEAS_NAMES), tau=vec(row, "tau", MEAS_NAMES),
                decision=decision,
            ))
    return log


# --- Monte-Carlo ---------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloReport:
    runs: int
    seeds: tuple[int, ...]
    metrics: tuple[Metrics, ...]
    delay_min: int | None
    delay_median: float | None
    delay_max: int | None
    false_alarm_rate_per_hour: float
    miss_rate: float | None

    def as_dict(self) -> dict:
        return {
            "runs": self.runs,
            "seeds": list(self.seeds),
            "delay_min": self.delay_min,
            "delay_median": self.delay_median,
            "delay_max": self.delay_max,
            "false_alarm_rate_per_hour": self.false_alarm_rate_per_hour,
            "miss_rate": self.miss_rate,
            "per_run": [m.as_dict() for m in self.metrics],
        }


def _run_one(args):
    index, cfg = args
    try:
        return cfg.seed, run_scenario(cfg)[1]
    except NavguardError as exc:
        raise RunFailed(index, cfg.seed, exc) from exc


def monte_carlo(cfg: ScenarioConfig, runs: int, seed_base: int = 0,
                workers: int = 1) -> MonteCarloReport:
    """Run ``cfg`` with seeds ``seed_base .. seed_base + runs - 1`` and aggregate."""
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    jobs = [(i, cfg.with_seed(seed_base + i)) for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    results.sort(key=lambda item: item[0])
    seeds = tuple(s for s, _ in results)
    metrics = tuple(m for _, m in results)

    delays = [m.detection_delay_steps for m in metrics if m.detection_delay_steps is not None]
    k_att = cfg.attack_step
    monitored_s = (cfg.n_steps if k_att is None else k_att) * cfg.T * runs
    false_alarms = sum(m.false_alarm_count for m in metrics)
    return MonteCarloReport(
        runs=runs, seeds=seeds, metrics=metrics,
        delay_min=min(delays) if delays else None,
        delay_median=statistics.median(delays) if delays else None,
        delay_max=max(delays) if delays else None,
        false_alarm_rate_per_hour=false_alarms / (monitored_s / 3600.0) if monitored_s else 0.0,
        miss_rate=None if k_att is None else (runs - len(delays)) / runs,
    )
