import numpy as np
import pytest

from machsurf.surface import PolynomialPatch

ACCEPTANCE_LINES: list[str] = []


def flat_patch(size=(60.0, 60.0), z=0.0):
    hx, hy = size[0] / 2, size[1] / 2
    net = np.array([[[-hx, -hy, z], [-hx, hy, z]], [[hx, -hy, z], [hx, hy, z]]])
    return PolynomialPatch(net, degrees=(1, 1))


@pytest.fixture
def flat():
    return flat_patch()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
