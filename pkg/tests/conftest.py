import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from beliefsum.hmm import RateLadder, TransitionModel
from beliefsum.learner import default_transition, reference_ladder

ACCEPTANCE_LINES = []


@pytest.fixture
def person_ladder():
    return reference_ladder("person")


@pytest.fixture
def uniform5():
    return default_transition(5)


@pytest.fixture
def small():
    """N=1 instance used by several hand-checked examples."""
    ladder = RateLadder((0.5, 2.0, 8.0))
    model = TransitionModel([[0.1, 0.8, 0.1]], 1.0, 1.0)
    return ladder, model


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
