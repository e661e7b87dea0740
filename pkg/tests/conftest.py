import sys

import numpy as np
import pytest

from hybrid_servo import robot
from hybrid_servo.geometry import RgbdIntrinsics, Transform, rotation_about
from hybrid_servo.simulation import build_scene


def random_transform(rng, scale=1.0):
    R = rotation_about(rng.standard_normal(3), rng.uniform(-np.pi, np.pi))
    return Transform(R, scale * rng.standard_normal(3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def intr():
    return RgbdIntrinsics(fku=500, fkv=400, u0=320, v0=240)


@pytest.fixture(scope="session")
def elbow():
    return robot.elbow_3dof()


@pytest.fixture(scope="session")
def planar():
    return robot.planar_2dof()


@pytest.fixture(scope="session")
def scene():
    """Default closed-loop scene with a zero-length horizon."""
    return build_scene(T=0.0)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
