"""Attack-aware INS/GNSS fusion: EKF innovation residuals monitored by CUSUM."""

from .config import load_config, paper_fig6_config
from .detector import CusumConfig, CusumState, Decision
from .ekf import EkfState, Residual
from .scenario import (
    FilterConfig, Metrics, ScenarioConfig, SimLog, compute_metrics, monte_carlo, run_scenario,
    write_log_csv,
)
from .sensors import AttackSpec, MeasurementSample, SensorSuiteConfig
from .statespace import LtiModel, RiccatiSolution, solve_dare
from .vehicle import VehicleState, Waypoint

__version__ = "0.1.0"
