import csv
import io

import numpy as np
import pytest

from conftest import build_system
from uwvf.assembly import make_bases
from uwvf.mesh import MaterialTable, generate_cube_mesh, single_tet_mesh, two_tet_mesh
from uwvf.planewave import DirectionSet, eval_plane_wave, trace_values
from uwvf.postprocess import (SLICE_COLUMNS, ExactSolution, error_norms, locate_points,
                              manufacture_boundary_data, reconstruct_field, sample_slice, write_slice_csv)
from uwvf.solve import SolverConfig, solve_bicgstab


def _bases(mesh, p=4, kappa=2.0, eps=1.0):
    return make_bases(mesh, MaterialTable.uniform(mesh, eps), kappa, p)


def test_unit_coefficient_reproduces_plane_wave(rng):
    mesh = single_tet_mesh()
    bases = _bases(mesh)
    chi = np.zeros(8, complex)
    chi[0] = 1
    x = rng.dirichlet(np.ones(4), 5) @ mesh.tet_vertices(0)
    ds = DirectionSet.hammersley(4)
    E, _ = eval_plane_wave(ds.directions[0], ds.pol1[0], 2.0, 1.0, x)
    assert np.allclose(reconstruct_field(chi, mesh, bases, 0, x), E, atol=1e-15)
    assert reconstruct_field(chi, mesh, bases, 0, x[0]).shape == (3,)
    assert not np.any(reconstruct_field(np.zeros(8), mesh, bases, 0, x))
    with pytest.raises(ValueError, match="outside"):
        reconstruct_field(chi, mesh, bases, 0, [2.0, 2.0, 2.0])


def test_exact_solution_validation():
    with pytest.raises(ValueError):
        ExactSolution([1, 0, 0], [1, 0, 0], 1.0)
    with pytest.raises(ValueError):
        ExactSolution([2, 0, 0], [0, 1, 0], 1.0)
    wave = ExactSolution.along([0, 0, 3], 1.0)
    assert np.allclose(wave.d, [0, 0, 1]) and abs(wave.p @ wave.d) < 1e-15


def test_manufactured_data_examples(rng):
    wave = ExactSolution([0, 0, 1], [1, 0, 0], 2.0)
    x = rng.normal(size=(4, 3))
    nu = np.array([0.0, 1.0, 0.0])
    E, c = wave(x)
    assert np.allclose(manufacture_boundary_data(wave, nu, 0.0, 1.5)(x), trace_values(E, c, nu, 2.0, 1.5, -1))
    # E is along x, so on a face with normal x its tangential trace vanishes and Q=1 data is zero
    assert np.allclose(manufacture_boundary_data(wave, [1.0, 0, 0], 1.0, 1.0)(x), 0, atol=1e-15)


def test_trefftz_exact_coefficients():
    mesh = generate_cube_mesh(1)
    ds = DirectionSet.hammersley(5)
    exact = ExactSolution(ds.directions[0], ds.pol1[0], 3.0)
    system, bases, boundary = build_system(mesh, 3.0, 5, Q=0.0, exact=exact)
    chi, rep = solve_bicgstab(system, SolverConfig(tol=1e-13))
    e0 = np.tile(np.eye(10)[0], mesh.n_elements)
    assert np.abs(chi - e0).max() <= 1e-10
    err = error_norms(chi, mesh, bases, exact, boundary)
    assert err.volume_rel <= 1e-9 and err.trace_rel <= 1e-9
    zero = error_norms(np.zeros_like(chi), mesh, bases, exact, boundary)
    assert zero.volume_rel == pytest.approx(1.0, rel=1e-12)
    assert zero.trace_rel == pytest.approx(1.0, rel=1e-12)


def test_locate_points_prefers_lowest_index():
    mesh = two_tet_mesh()
    shared = mesh.vertices[[1, 2, 3]].mean(axis=0)
    owner = locate_points(mesh, [shared, [0.1, 0.1, 0.1], [0.9, 0.9, 0.9], [5, 5, 5]])
    assert owner.tolist() == [0, 0, 1, -1]


def test_slice_through_single_tet():
    mesh = single_tet_mesh()
    bases = _bases(mesh)
    chi = np.ones(8, complex)
    samples = sample_slice(chi, mesh, bases, [0, 0, 0.25], [0.5, 0, 0], [0, 0.5, 0], (2, 2))
    assert len(samples) == 4
    assert [s.element for s in samples] == [0, 0, 0, -1]
    assert not np.any(samples[-1].E)
    text = write_slice_csv(samples)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == SLICE_COLUMNS
    assert len(rows) == 5 and rows[-1][-1] == "-1"
    assert [float(v) for v in rows[3][:3]] == [0.5, 0.0, 0.25]


def test_slice_outside_domain():
    mesh = single_tet_mesh()
    samples = sample_slice(np.ones(8), mesh, _bases(mesh), [0, 0, 3], [1, 0, 0], [0, 1, 0], (3, 3))
    assert all(s.element == -1 for s in samples)
    buf = io.StringIO()
    write_slice_csv(samples, buf)
    assert buf.getvalue().count("\n") == 10
    with pytest.raises(ValueError):
        sample_slice(np.ones(8), mesh, _bases(mesh), [0, 0, 0], [1, 0, 0], [0, 1, 0], (0, 3))
