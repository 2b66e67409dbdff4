import numpy as np
import pytest

from iga_peec.assembly import assemble_potential_matrix
from iga_peec.geometry import make_concentric_spheres, make_sphere, refine


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long-running refinement levels, deselect with "
        "-m 'not slow'")


_CRITERION_LINES = {}


@pytest.fixture(scope="session")
def record():
    """Collect one verdict line per acceptance criterion.

    Returns the verdict so tests can both print and assert on it; the
    collected block is echoed after the run summary.
    """

    def _record(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERION_LINES[number] = line
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERION_LINES):
            terminalreporter.write_line(_CRITERION_LINES[n])


@pytest.fixture(scope="session")
def concentric_geometry():
    return make_concentric_spheres(0.1, 0.2)


@pytest.fixture(scope="session")
def mesh_l0(concentric_geometry):
    return refine(concentric_geometry, 0)


@pytest.fixture(scope="session")
def mesh_l1(concentric_geometry):
    return refine(concentric_geometry, 1)


@pytest.fixture(scope="session")
def matrix_l0(mesh_l0):
    return assemble_potential_matrix(mesh_l0)


@pytest.fixture(scope="session")
def matrix_l1(mesh_l1):
    return assemble_potential_matrix(mesh_l1)


@pytest.fixture(scope="session")
def sphere_mesh_l1():
    return refine(make_sphere(1.0), 1)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260822)
