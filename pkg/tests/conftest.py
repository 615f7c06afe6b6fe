import numpy as np
import pytest

from uavsplit.data import generate_synthetic, prepare


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_data():
    """Prepared split of a short synthetic series (80 days -> 60 samples)."""
    return prepare(generate_synthetic(seed=3, n_days=80))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
