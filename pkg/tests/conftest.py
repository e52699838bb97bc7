import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from pedswerve.swerve import QuadraticSwerveParams  # noqa: E402
from pedswerve.symreg import SinusoidParams  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

QUAD_A = QuadraticSwerveParams(-5.21, 0.172, -0.036, -0.0011, 0.009, 0.0002)
QUAD_B = QuadraticSwerveParams(319.9, -9.82, 0.031, 0.075, -0.076, 0.0003)
SINE_A = SinusoidParams(-0.335, 0.046, -4.137, -0.968)
SINE_B = SinusoidParams(-0.371, -0.078, -9.72, 1.456)

# Crossing geometries for which the planted coefficient sets have a consistent swerve.
QUAD_A_GEOMETRY = dict(swerver_speed=20.0, other_speed=10.0, crossing_offset=0.0)
QUAD_B_GEOMETRY = dict(swerver_speed=40.0, other_speed=10.0, crossing_offset=20.0)


def rel_err(got, want):
    got, want = np.asarray(got, float), np.asarray(want, float)
    return np.max(np.abs(got - want) / np.abs(want))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
