import numpy as np
import pytest

from fracneumann.geometry import build_domain, build_mesh

INTERVAL = {"shape": "interval", "bounds": [-1.0, 1.0]}
DISK = {"shape": "disk", "center": [0.0, 0.0], "radius": 1.0}

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def interval():
    return build_domain(INTERVAL)


@pytest.fixture(scope="session")
def disk():
    return build_domain(DISK)


@pytest.fixture(scope="session")
def line_mesh(interval):
    return build_mesh(interval, 0.05)


@pytest.fixture(scope="session")
def coarse_line_mesh(interval):
    return build_mesh(interval, 0.1)


@pytest.fixture(scope="session")
def disk_mesh(disk):
    return build_mesh(disk, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
