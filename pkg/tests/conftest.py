import numpy as np
import pytest

from bid.core import ActionChunk


def chunk(t, values, tag="strong"):
    return ActionChunk(t, np.asarray(values, dtype=float), tag)


class FixedSampler:
    """Returns a preset list of action arrays as chunks at the history's tick."""

    def __init__(self, arrays, tag="strong"):
        self.arrays = [np.asarray(a, dtype=float) for a in arrays]
        self.tag = tag
        self.calls = 0

    def sample(self, history, n, rng):
        self.calls += 1
        return [ActionChunk(history.tick, self.arrays[i % len(self.arrays)], self.tag)
                for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
