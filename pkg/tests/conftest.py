import numpy as np
import pytest
from hypothesis import settings

from mbqc_f2.core import make_rng, random_state, random_unitary

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=50)
settings.load_profile("repo")

# filled by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return make_rng(20240607)


def haar_state(n, seed):
    return random_state(n, make_rng(seed, 99))


def haar_unitary(dim, seed):
    return random_unitary(dim, make_rng(seed, 98))


def phase_fidelity(a, b):
    return float(abs(np.vdot(a, b)) ** 2)
