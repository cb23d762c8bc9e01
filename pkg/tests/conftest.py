import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", max_examples=25, deadline=None)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=12345))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
