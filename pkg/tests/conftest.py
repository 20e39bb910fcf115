import numpy as np
import pytest

from tlsfluct.model import ResonatorParams

_ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    _ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def resonator():
    return ResonatorParams.from_internal(4e5, 4e5, 0.2, f_r=6e9, amplitude=0.7 * np.exp(0.4j), delay=25e-9)
