import math

import numpy as np
import pytest

from mflab.model import make_zoo_model


def bisect(f, a, b, tol=1e-15):
    fa = f(a)
    assert fa * f(b) < 0
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
        if b - a < tol:
            break
    return 0.5 * (a + b)


def sis_fixed_point(beta=2.0, gamma=1.0, lam=0.01):
    # positive root of -beta m^2 + (beta - gamma - lam) m + lam = 0
    a, b, c = -beta, beta - gamma - lam, lam
    disc = b * b - 4 * a * c
    return (-b - math.sqrt(disc)) / (2 * a)


def logistic_two_cycle(r=3.2):
    g = lambda x: r * x * (1 - x)
    h = lambda x: g(g(x)) - x
    fp = 1 - 1 / r
    return bisect(h, 0.3, fp - 1e-3), bisect(h, fp + 1e-3, 0.95)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sis():
    return make_zoo_model("sis")


@pytest.fixture(scope="session")
def hopf():
    return make_zoo_model("hopf")


@pytest.fixture(scope="session")
def logistic32():
    return make_zoo_model("logistic", r=3.2)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
