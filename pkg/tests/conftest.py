import numpy as np
import pytest

from structured_rx.field import FieldState

ACCEPTANCE_LINES: list[str] = []


def random_state(rng: np.random.Generator, max_bins: int = 12, start_range: int = 6) -> FieldState:
    n = int(rng.integers(1, max_bins + 1))
    amps = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    return FieldState(int(rng.integers(-start_range, start_range + 1)), amps)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
