import numpy as np
import pytest

from lyapcert.expr import field
from lyapcert.generator import GeneratorContext
from lyapcert.measure import build_measure

ACCEPTANCE_LINES = []  # (criterion number, printed line)


@pytest.fixture(scope="session")
def gauss():
    V = field("x1^2", 1)
    return build_measure(V, 8.0, 4096)


@pytest.fixture(scope="session")
def gauss_ctx(gauss):
    return GeneratorContext(gauss.V)


@pytest.fixture(scope="session")
def gauss2d():
    return build_measure(field("r2", 2), 6.0, 128)


@pytest.fixture(scope="session")
def uniform():
    return build_measure(field("0", 1), 1.0, 2001, compact=True)


@pytest.fixture(scope="session")
def cauchy2():
    V = field("1.5*log(1+x1^2)", 1)
    return build_measure(V, 1e4, 4096, log_refine=True, tail_exponent=3.0)


@pytest.fixture(scope="session")
def polar():
    return build_measure(field("r2*(2+sin(4*theta))", 2), 6.0, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
