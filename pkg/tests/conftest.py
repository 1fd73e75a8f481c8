from dataclasses import replace

import numpy as np
import pytest

from navguard.config import paper_fig6_config
from navguard.sensors import SensorSuiteConfig

ACCEPTANCE_LINES = []


def attack_free(cfg, duration=None):
    cfg = replace(cfg, attack=None)
    return cfg if duration is None else replace(cfg, duration=duration)


def noiseless(cfg):
    sensor = SensorSuiteConfig(noise_std=np.zeros(6), bias=np.zeros(6), seed=cfg.seed)
    return replace(cfg, sensor=sensor, filter=replace(cfg.filter, Q=(0.0,) * 11,
                                                      R=(0.25, 0.25, 1e-4, 1e-4, 2.5e-3, 2.5e-3)))


@pytest.fixture(scope="session")
def paper_cfg():
    return paper_fig6_config()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
