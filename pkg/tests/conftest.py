import numpy as np
import pytest

from ensnse.femspace import build_space
from ensnse.mesh import unit_square_mesh


@pytest.fixture(scope="session")
def space4():
    return build_space(unit_square_mesh(4))


@pytest.fixture(scope="session")
def space8():
    return build_space(unit_square_mesh(8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> list of (passed, detail); filled by test_acceptance
ACCEPTANCE = {}
ACCEPTANCE_TABLES = []


@pytest.fixture(scope="session")
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[number]
        status = "PASS" if all(p for p, _ in checks) else "FAIL"
        tr.write_line(f"criterion {number:2d}: {status}  " + "; ".join(d for _, d in checks))
    for title, text in ACCEPTANCE_TABLES:
        tr.write_line("")
        tr.write_line(title)
        for line in text.splitlines():
            tr.write_line(line)
