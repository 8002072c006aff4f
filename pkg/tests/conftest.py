import pytest
from hypothesis import HealthCheck, settings

from helpers import constant_channel
from macid.channel_core import SequenceDistribution, binary_adder

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def adder():
    return binary_adder()


@pytest.fixture
def uniform1(adder):
    return SequenceDistribution.uniform(adder.in1, 1)


@pytest.fixture
def constant():
    return constant_channel([0.3, 0.7])
