import numpy as np
import pytest

from synchro import LoadDemand, autotune_vref, table2

# acceptance verdicts, printed once at the end of the session
_VERDICTS = []


def record_verdict(number, title, passed, detail):
    _VERDICTS.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_VERDICTS):
        terminalreporter.write_line(f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def p2():
    """Table II record with both set points unset."""
    return table2()


@pytest.fixture(scope="session")
def tuned():
    """``(params, equilibrium)`` at P_L = 0.05 pu, bus held at 1 pu."""
    V_r, eq = autotune_vref(table2(), None, LoadDemand(0.05), 1.0)
    return eq.params.with_operating_point(V_r_s=V_r), eq


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
