import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from thermopinn.collocation import build_grid  # noqa: E402
from thermopinn.physics import EnvironmentConfig  # noqa: E402


@pytest.fixture(scope="session")
def env():
    return EnvironmentConfig()


@pytest.fixture(scope="session")
def grid(env):
    return build_grid(env)


@pytest.fixture(scope="session")
def small_grid(env):
    # coarse but complete: every partition populated
    return build_grid(env, (5, 6, 10, 12))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
