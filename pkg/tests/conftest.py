import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import link_prob  # noqa: E402

# fixed before any test was run; never tuned
SEED = 20261016

P20, P30, P40, P10 = (link_prob(d) for d in (20, 30, 40, 10))


@pytest.fixture
def seed():
    return SEED


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
