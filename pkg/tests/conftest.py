import pytest

from mcdqkd import REFERENCE_CHANNEL, IntensityProfile, observe


@pytest.fixture
def profile3():
    return IntensityProfile((0.5, 0.2, 1e-6), (1 / 3, 1 / 3, 1 / 3))


@pytest.fixture
def observed3(profile3):
    return observe(REFERENCE_CHANNEL, profile3)


@pytest.fixture
def table_point():
    """Near-optimal k=3 parameters for s_X = 1e7 on the reference channel."""
    mu = (0.2185402, 0.1185402, 1e-6)
    p = (0.11539253, 0.66850825)
    profile = IntensityProfile(mu, p + (1.0 - sum(p),))
    return profile, observe(REFERENCE_CHANNEL, profile), 0.8124853857


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
