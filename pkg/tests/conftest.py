import numpy as np
import pytest

from lprf.grids import BoxGrid


@pytest.fixture(scope="session")
def box16():
    return BoxGrid(np.pi, 16)


@pytest.fixture(scope="session")
def box32():
    return BoxGrid(8.0, 32)


# acceptance verdicts, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 13):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (no verdict recorded in this session: not selected, or errored before measuring)")
