import pytest

from nvdnp.hamiltonian import C13, NV, P1
from nvdnp.spin import SpinRegister, SpinSpecies

CRITERIA: dict = {}


def record_criterion(number: int, title: str, checks) -> bool:
    ok = all(c.passed for c in checks)
    detail = "; ".join(c.line() for c in checks)
    CRITERIA[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title} :: {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])


@pytest.fixture
def qubit_pair():
    return SpinRegister((SpinSpecies(P1, 0.5, 28.0), SpinSpecies(C13, 0.5, 0.01071)))


@pytest.fixture
def nv_qubit():
    return SpinRegister((SpinSpecies(NV, 1.0, 28.0), SpinSpecies(C13, 0.5, 0.01071)))
