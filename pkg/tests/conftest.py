import sys

import numpy as np
import pytest

from baxlab.rng import make_rng
from baxlab.walk import TandemWalk

RUNNING_VALUES = [(0, 2), (0, 3), (0, 3), (1, 2), (2, 1), (0, 3), (1, 2), (2, 1), (3, 0), (2, 0)]
RUNNING_PERM = (8, 6, 5, 7, 9, 1, 2, 4, 10, 3)


@pytest.fixture
def running_walk() -> TandemWalk:
    return TandemWalk(np.array(RUNNING_VALUES))


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(12345, "tests")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail})")
