import numpy as np
import pytest

from kinpara.grid import GridSpec, RealField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid64():
    return GridSpec(64, 64)


@pytest.fixture
def random_field(rng, grid64):
    return RealField(grid64, rng.standard_normal(grid64.shape))


def pytest_terminal_summary(terminalreporter):
    lines = [v for reps in terminalreporter.stats.values() for r in reps
             for k, v in getattr(r, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines), key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
