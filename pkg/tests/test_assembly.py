import numpy as np
import pytest

from conftest import build_system
from uwvf.assembly import (AbsorbingMediumWarning, AssemblyError, BoundaryCondition, FaceQuadrature, TIPDGParams,
                           assemble_boundary, assemble_coupling, assemble_rhs, assemble_system, assemble_tipdg,
                           dof_count, dump_system, make_bases)
from uwvf.mesh import MaterialTable, generate_cube_mesh, single_tet_mesh, two_tet_mesh
from uwvf.planewave import DirectionSet, LocalBasis
from uwvf.postprocess import ExactSolution, manufactured_data
from uwvf.quadrature import composite_face_rule, oscillatory_face_oracle


def _face(mesh, k, i, kappa=2.0):
    pts, w = composite_face_rule(mesh.face_vertices(k, i), kappa, 1.0)
    return mesh.geometry(k).normals[i], FaceQuadrature(pts, w)


def test_D_hermitian_positive():
    system, _, _ = build_system(generate_cube_mesh(1), 3.0, 6, Q=0.5)
    for D in system.D_blocks:
        assert np.array_equal(D, D.conj().T)
        assert np.linalg.eigvalsh(D).min() > 0


def test_structure_two_tets():
    mesh = two_tet_mesh()
    for Q, n_boundary in ((0.0, 0), (0.5, 6)):
        system, _, _ = build_system(mesh, 2.0, 4, Q=Q)
        assert [D.shape for D in system.D_blocks] == [(8, 8), (8, 8)]
        interior = [b for b in system.C_blocks if b.row != b.col]
        assert {(b.row, b.col) for b in interior} == {(0, 1), (1, 0)}
        assert len(system.C_blocks) - len(interior) == n_boundary
        assert system.dof_count == dof_count([4, 4]) == 16


def test_boundary_block_linear_in_Q():
    mesh = single_tet_mesh()
    basis = LocalBasis(0, DirectionSet.hammersley(4), 2.0, 1.0)
    nu, quad = _face(mesh, 0, 0)
    assert not np.any(assemble_boundary(basis, nu, quad, 1.0, 0.0))
    full, half = assemble_boundary(basis, nu, quad, 1.0, 1.0), assemble_boundary(basis, nu, quad, 1.0, 0.5)
    assert np.abs(full - 2 * half).max() <= 1e-14 * np.abs(full).max()
    with pytest.raises(ValueError):
        assemble_boundary(basis, nu, quad, 1.0, 1.5)


def test_rhs_linearity_and_tangential_check():
    mesh = single_tet_mesh()
    basis = LocalBasis(0, DirectionSet.hammersley(4), 2.0, 1.0)
    nu, quad = _face(mesh, 0, 1)
    g = manufactured_data(ExactSolution.along([0.3, 0.1, 0.9], 2.0), 0.5, 1.0)
    assert not np.any(assemble_rhs(basis, nu, quad, 1.0, lambda x, n: np.zeros((len(x), 3))))
    c = 0.7 - 1.3j
    b1 = assemble_rhs(basis, nu, quad, 1.0, g)
    bc = assemble_rhs(basis, nu, quad, 1.0, lambda x, n: c * g(x, n))
    assert np.allclose(bc, c * b1, rtol=1e-14, atol=0)
    with pytest.raises(ValueError, match="tangential"):
        assemble_rhs(basis, nu, quad, 1.0, lambda x, n: np.tile(n, (len(x), 1)))


def test_small_kappa_coupling_matches_oracle():
    mesh = two_tet_mesh()
    kappa = 1e-3
    f = mesh.interior_faces[0]
    k0, k1 = mesh.face_elements[f]
    i0 = mesh.face_local[f, 0]
    nu, quad = _face(mesh, k0, i0, kappa)
    b0 = LocalBasis(k0, DirectionSet.hammersley(3), kappa, 1.0)
    b1 = LocalBasis(k1, DirectionSet.hammersley(3), kappa, 1.0)
    C = assemble_coupling(b0, b1, nu, quad, 1.0)
    assert np.all(np.isfinite(C))
    tri = mesh.face_vertices(k0, i0)
    # every entry is a constant times the same phase integral
    for m in range(b0.size):
        for n in range(b1.size):
            Fm = b0.traces(tri[:1], nu, -1)[0, m] / np.exp(1j * tri[0] @ b0.wave_vectors()[m])
            Fn = b1.traces(tri[:1], -nu, +1)[0, n] / np.exp(1j * tri[0] @ b1.wave_vectors()[n])
            ref = -(Fn @ Fm.conj()) * oscillatory_face_oracle(1.0, b1.wave_vectors()[n] - b0.wave_vectors()[m].conj(),
                                                              tri)
            # structurally zero entries are compared against the integrand size
            scale = max(abs(ref), np.linalg.norm(Fn) * np.linalg.norm(Fm) * quad.weights.sum())
            assert abs(C[m, n] - ref) <= 1e-10 * scale


def test_assembly_independent_of_threads():
    mesh = generate_cube_mesh(2)
    exact = ExactSolution.along([0.3, -0.5, 0.8], 3.0)
    ref, _, _ = build_system(mesh, 3.0, 5, Q=0.5, exact=exact, workers=1)
    for workers in (3, 8):
        other, _, _ = build_system(mesh, 3.0, 5, Q=0.5, exact=exact, workers=workers)
        assert dump_system(other) == dump_system(ref)


def test_dump_format():
    system, _, _ = build_system(two_tet_mesh(), 2.0, 2, Q=0.5)
    lines = dump_system(system).splitlines()
    assert lines[0] == f"uwvf-system 1 2 {len(system.C_blocks)} 8"
    assert lines[1] == "D 0 4 4"
    row = [float(t) for t in lines[2].split()]
    D0 = system.D_blocks[0]
    assert np.array_equal(np.array(row[0::2]) + 1j * np.array(row[1::2]), D0[0])
    assert sum(ln.startswith("C ") for ln in lines) == len(system.C_blocks)
    assert sum(ln.startswith("b ") for ln in lines) == 2


def test_input_errors():
    mesh = generate_cube_mesh(1)
    bases = make_bases(mesh, MaterialTable.uniform(mesh), 2.0, 3)
    with pytest.raises(AssemblyError, match="boundary condition"):
        assemble_system(mesh, bases, {1: BoundaryCondition()})
    with pytest.raises(ValueError):
        BoundaryCondition(Q=-1.2)
    with pytest.raises(AssemblyError):
        assemble_system(mesh, bases[:-1], {t: BoundaryCondition() for t in mesh.boundary_tags})


def test_condition_cap_names_elements():
    mesh = single_tet_mesh(np.array([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]) * 0.05)
    bases = make_bases(mesh, MaterialTable.uniform(mesh), 1.0, 30)
    with pytest.raises(AssemblyError) as info:
        assemble_system(mesh, bases, {1: BoundaryCondition()}, cond_cap=1e6)
    assert info.value.elements == [0]
    assert "p_K=30" in str(info.value)


def test_absorbing_medium_warns():
    mesh = single_tet_mesh()
    bases = make_bases(mesh, MaterialTable.uniform(mesh, 2 + 0.5j), 2.0, 3)
    with pytest.warns(AbsorbingMediumWarning):
        assemble_system(mesh, bases, {1: BoundaryCondition()})


def test_tipdg_penalty_is_linear_in_alpha():
    mesh = two_tet_mesh()
    bases = make_bases(mesh, MaterialTable.uniform(mesh), 2.0, 3)
    bc = {1: BoundaryCondition(0.0, 1.0, None)}
    A = {a: assemble_tipdg(mesh, bases, bc, TIPDGParams(alpha=a))[0] for a in (1.0, 2.0, 4.0)}
    # doubling alpha doubles the penalty contribution
    assert np.allclose(A[4.0] - A[2.0], 2 * (A[2.0] - A[1.0]), rtol=0, atol=1e-13 * np.abs(A[4.0]).max())
    assert np.abs(A[2.0] - A[1.0]).max() > 0


def test_tipdg_solution_independent_of_symmetric_split():
    # the exact solution solves the Trefftz-IPDG system for every flux choice
    mesh = generate_cube_mesh(1)
    ds = DirectionSet.hammersley(4)
    exact = ExactSolution(ds.directions[0], ds.pol1[0], 2.0)
    bases = make_bases(mesh, MaterialTable.uniform(mesh), 2.0, 4)
    bc = {t: BoundaryCondition(0.3, 1.0, manufactured_data(exact, 0.3, 1.0)) for t in mesh.boundary_tags}
    e0 = np.zeros(dof_count([4] * mesh.n_elements), complex)
    e0[::8] = 1
    for params in (TIPDGParams(), TIPDGParams(1.0, 2.0, 0.25)):
        A, r = assemble_tipdg(mesh, bases, bc, params)
        assert np.linalg.norm(A @ e0 - r) <= 1e-11 * np.linalg.norm(r)
