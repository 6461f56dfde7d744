import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the assertion is left to the test."""

    def record(cid, description, passed, detail=""):
        ACCEPTANCE_RESULTS.append((cid, description, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, description, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {cid}: {description} {detail}".rstrip())
