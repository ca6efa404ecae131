import numpy as np
import pytest

from soqdyn.grid import make_grid
from soqdyn.model import ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def harmonic():
    return ModelParams(0.0, 0.0, 0.0, 0.0, 1.0)


@pytest.fixture
def small_grid():
    return make_grid(64, 8.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for rep in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", []):
        if rep.when != "call":
            continue
        lines += [v for k, v in rep.user_properties if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
