import math

import numpy as np
import pytest

from coordfeas.vehicles import CarLike, ConstantSpeed, Unicycle


def random_vehicle_state(kind, rng):
    x, y = rng.uniform(-5, 5, size=2)
    th = rng.uniform(-math.pi, math.pi)
    if kind.kind == "car":
        return np.array([x, y, th, rng.uniform(-1.4, 1.4)])
    return np.array([x, y, th])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


KINDS = [Unicycle(), ConstantSpeed(1.5), CarLike(0.5)]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
