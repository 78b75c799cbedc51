import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finsler_em.connection import EhresmannConnection
from finsler_em.geometry import FundamentalFunction, VerticalMetric
from finsler_em.jets import TangentSample

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

RANDERS_A = [["1 + 0.1*sin(x1)", 0, 0, 0], [0, -1, 0, 0], [0, 0, "-1 - 0.05*x0^2", 0], [0, 0, 0, -1]]
RANDERS_B = [0.1, "0.05*cos(x2)", 0, 0]
SCHWARZSCHILD = ["1 - 2/x1", "-1/(1 - 2/x1)", "-x1^2", "-x1^2*sin(x2)^2"]


def randers():
    return FundamentalFunction.randers(RANDERS_A, RANDERS_B)


def curved_v():
    return VerticalMetric.from_matrix(["exp(0.2*x0)", "exp(0.2*x0)", "exp(0.3*x1)", 1])


def schwarzschild():
    return FundamentalFunction.riemannian(SCHWARZSCHILD)


P_RANDERS = TangentSample((0.3, 0.2, -0.1, 0.4), (1.0, 0.2, 0.1, -0.15))
P_BM = TangentSample((0.3, 0.2, -0.1, 0.4), (1.0, 0.7, 0.5, 0.3))
P_SCHW = TangentSample((0.1, 4.0, 1.2, 0.3), (1.0, 0.05, 0.02, -0.03))


def random_timelike(rng, spread=0.3):
    """y with y0 = 1 and a small spatial part: timelike for the catalog Lorentz metrics."""
    return (1.0, *(spread * (2 * rng.random(3) - 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def catalog():
    """(name, F, sample) triples covering every catalog kind."""
    return [
        ("minkowski", FundamentalFunction.minkowski(), P_RANDERS),
        ("randers", randers(), P_RANDERS),
        ("berwald_moor", FundamentalFunction.berwald_moor(), P_BM),
        ("riemannian", schwarzschild(), P_SCHW),
        ("expression", FundamentalFunction.from_expression("sqrt(y0^2 - y1^2 - y2^2 - y3^2) + 0.1*y0"),
         P_RANDERS),
    ]


@pytest.fixture
def canonical_curved():
    v = curved_v()
    return v, EhresmannConnection.canonical(v)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
