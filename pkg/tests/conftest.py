import numpy as np
import pytest

from uwvf.assembly import BoundaryCondition, assemble_system, make_bases
from uwvf.mesh import MaterialTable
from uwvf.postprocess import manufactured_data

_ACCEPTANCE = []


def record(number, name, passed, detail=""):
    """Store one acceptance outcome; all of them are printed after the run."""
    _ACCEPTANCE.append((number, name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] #{number} {name}: {detail}")


def build_system(mesh, kappa, p, eps=1.0, Q=0.0, lam=1.0, exact=None, workers=1):
    materials = MaterialTable.uniform(mesh, eps)
    bases = make_bases(mesh, materials, kappa, p)
    data = manufactured_data(exact, Q, lam) if exact is not None else None
    boundary = {t: BoundaryCondition(Q, lam, data) for t in mesh.boundary_tags}
    return assemble_system(mesh, bases, boundary, workers=workers), bases, boundary


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
