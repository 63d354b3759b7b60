import math

import pytest

from surveymech.prior import PriorSpec

ACCEPTANCE_LINES = []


def smoothstep(c_from, c_to, width):
    """Cubic in local t rising from c_from to c_to over [0, width] with flat ends."""
    d = c_to - c_from
    return [c_from, 0.0, 3 * d / width**2, -2 * d / width**3]


def steep_sigmoid(c1=0.2, width=0.1, lo=1.0, bp=2.0, hi=4.0):
    """Low plateau, a steep smooth rise, high plateau: irregular just after bp."""
    return PriorSpec.piecewise_polynomial([lo, bp, bp + width, hi], [[c1], smoothstep(c1, 1.0, width), [1.0]])


def double_sigmoid(c1=0.2, c2=0.5, c3=1.0, width=0.1, b1=2.0, b2=2.25, hi=4.0):
    """Two steep rises; close enough together their ironed stretches merge."""
    return PriorSpec.piecewise_polynomial(
        [1.0, b1, b1 + width, b2, b2 + width, hi],
        [[c1], smoothstep(c1, c2, width), [c2], smoothstep(c2, c3, width), [c3]],
    )


@pytest.fixture
def uniform():
    return PriorSpec.uniform(1.0, 2.0)


@pytest.fixture
def exponential():
    return PriorSpec.exponential(1.0)


@pytest.fixture
def lognormal():
    return PriorSpec.lognormal(0.0, 0.5)


@pytest.fixture
def sigmoid():
    return steep_sigmoid()


@pytest.fixture
def merged_sigmoid():
    return double_sigmoid(b2=2.15)


def uniform_vstar(alpha):
    """Closed form of int_1^2 sqrt((2x - 1) / alpha) dx."""
    return (3 * math.sqrt(3) - 1) / (3 * math.sqrt(alpha))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
