import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from subvolmerge import PhantomSpec, make_phantom  # noqa: E402


@pytest.fixture(scope="session")
def small_phantom():
    return make_phantom(PhantomSpec(dims=(40, 48, 48), seed=3))


@pytest.fixture(scope="session")
def full_phantom():
    return make_phantom(PhantomSpec(dims=(128, 192, 192), seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
