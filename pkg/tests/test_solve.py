import numpy as np
import pytest
from scipy.sparse.linalg import bicgstab as scipy_bicgstab

from conftest import build_system
from uwvf.assembly import BoundaryCondition
from uwvf.mesh import MaterialTable, generate_cube_mesh, single_tet_mesh, two_tet_mesh
from uwvf.postprocess import ExactSolution
from uwvf.solve import (DIRECTION_STEP, DirectionAdaptError, SolverConfig, adapt_directions, iteration_operator,
                        solve, solve_bicgstab, solve_stationary)

WAVE = ExactSolution.along([0.3, -0.5, 0.8], 3.0)


@pytest.fixture(scope="module")
def two_tet_system():
    return build_system(two_tet_mesh(), 3.0, 8, Q=0.0, exact=WAVE)[0]


@pytest.mark.parametrize("solver", [solve_stationary, solve_bicgstab])
def test_zero_data_zero_solution(solver):
    system, _, _ = build_system(generate_cube_mesh(1), 3.0, 6, Q=0.5)
    x, rep = solver(system)
    assert rep.iterations == 0 and rep.converged
    assert not np.any(x)


@pytest.mark.parametrize("method", ["stationary", "bicgstab"])
def test_default_tolerance_reached(two_tet_system, method):
    x, rep = solve(two_tet_system, SolverConfig(method=method))
    assert rep.converged and rep.residual <= 1e-5
    assert rep.iterations > 0 and len(rep.residual_history) == rep.iterations + 1


def test_solvers_agree(two_tet_system):
    tight = SolverConfig(tol=1e-12)
    a, _ = solve_stationary(two_tet_system, tight)
    b, _ = solve_bicgstab(two_tet_system, tight)
    assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)
    direct = np.linalg.solve(two_tet_system.dense_D() - two_tet_system.dense_C(), two_tet_system.b)
    assert np.linalg.norm(b - direct) <= 1e-8 * np.linalg.norm(direct)


def test_against_scipy_bicgstab(two_tet_system):
    x, _ = solve_bicgstab(two_tet_system, SolverConfig(tol=1e-10))
    A = iteration_operator(two_tet_system)
    ref, info = scipy_bicgstab(A, two_tet_system.solve_D(two_tet_system.b), rtol=1e-10, atol=0.0)
    assert info == 0
    assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)


@pytest.mark.parametrize("method", ["stationary", "bicgstab"])
def test_bitwise_repeatable(two_tet_system, method):
    a, _ = solve(two_tet_system, SolverConfig(method=method))
    b, _ = solve(two_tet_system, SolverConfig(method=method))
    assert a.tobytes() == b.tobytes()


def test_iteration_cap_reports_failure(two_tet_system):
    _, rep = solve_stationary(two_tet_system, SolverConfig(method="stationary", tol=1e-12, max_iter=3))
    assert not rep.converged and rep.iterations == 3


def test_report_residuals(two_tet_system):
    x, rep = solve_bicgstab(two_tet_system, SolverConfig(tol=1e-8))
    f = two_tet_system.solve_D(two_tet_system.b)
    r = f - iteration_operator(two_tet_system).matvec(x)
    assert rep.residual_euclidean == pytest.approx(np.linalg.norm(r) / np.linalg.norm(f), rel=1e-6)
    assert rep.residual_dweighted > 0


def test_config_validation():
    for bad in (dict(method="gmres"), dict(tol=0.0), dict(max_iter=-1), dict(p_min=5, p_max=3)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def _scaled_tet(h):
    return single_tet_mesh(np.array([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]) * h)


def test_adapt_small_elements_lose_directions():
    mesh = _scaled_tet(0.02)
    counts, conds = adapt_directions(mesh, MaterialTable.uniform(mesh), 1.0, SolverConfig(),
                                     {1: BoundaryCondition()})
    assert counts[0] < 67 and (67 - counts[0]) % DIRECTION_STEP == 0
    assert conds[0] <= 1e12


def test_adapt_large_elements_keep_p_max():
    mesh = _scaled_tet(1.0)
    counts, _ = adapt_directions(mesh, MaterialTable.uniform(mesh), 10.0, SolverConfig())
    assert counts.tolist() == [67]


def test_adapt_degenerate_bounds():
    mesh = _scaled_tet(1.0)
    counts, _ = adapt_directions(mesh, MaterialTable.uniform(mesh), 10.0, SolverConfig(p_min=9, p_max=9))
    assert counts.tolist() == [9]
    small = _scaled_tet(0.02)
    with pytest.raises(DirectionAdaptError) as info:
        adapt_directions(small, MaterialTable.uniform(small), 1.0, SolverConfig(p_min=40, p_max=40))
    assert info.value.element == 0


def test_adapt_independent_of_threads():
    mesh = generate_cube_mesh(1)
    cfg = SolverConfig(p_max=31, cond_cap=1e6)
    a = adapt_directions(mesh, MaterialTable.uniform(mesh), 2.0, cfg, workers=1)
    b = adapt_directions(mesh, MaterialTable.uniform(mesh), 2.0, cfg, workers=4)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
