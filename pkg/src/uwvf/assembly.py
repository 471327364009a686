"""Face-based assembly of the UWVF system and its Trefftz-IPDG counterpart.

UWVF unknowns are coefficients of outgoing impedance traces
``nu x curl xi + 1j*kappa*lam*xi_T`` of the element plane waves. The
discrete equations read ``D x = C x + b`` with ``D`` block diagonal and
Hermitian positive definite.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .mesh import MaterialTable, Mesh
from .planewave import DirectionSet, LocalBasis
from .quadrature import ASSEMBLY_SAFETY, composite_face_rule

__all__ = [
    "AssemblyError",
    "AbsorbingMediumWarning",
    "BoundaryCondition",
    "TIPDGParams",
    "CouplingBlock",
    "AssembledSystem",
    "FaceQuadrature",
    "make_bases",
    "dof_count",
    "mean_directions",
    "assemble_local_D",
    "assemble_coupling",
    "assemble_boundary",
    "assemble_rhs",
    "assemble_system",
    "assemble_tipdg",
    "dump_system",
]


class AssemblyError(RuntimeError):
    def __init__(self, message: str, elements: Sequence[int] = ()):
        super().__init__(message)
        self.elements = list(elements)


class AbsorbingMediumWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BoundaryCondition:
    """Impedance condition ``F^- = Q F^+ + g`` on one boundary tag.

    ``data(x, normal)`` returns the tangential field ``g`` at points ``x``
    of a face with outward unit ``normal``; ``None`` means ``g = 0``.
    """

    Q: float = 0.0
    lam: float = 1.0
    data: Callable | None = None

    def __post_init__(self):
        if abs(self.Q) > 1:
            raise ValueError(f"|Q| must be <= 1, got {self.Q}")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class TIPDGParams:
    """Trefftz-IPDG flux weights.

    ``alpha`` scales the ``1j*kappa*lam`` jump penalty, ``beta`` the
    ``1/(1j*kappa*lam)`` curl-jump term, ``delta`` the boundary flux split.
    ``alpha = beta = delta = 1/2`` reproduces the UWVF.
    """

    alpha: float = 0.5
    beta: float = 0.5
    delta: float = 0.5

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class CouplingBlock:
    row: int
    col: int
    face: int
    matrix: np.ndarray


@dataclass(frozen=True)
class FaceQuadrature:
    points: np.ndarray
    weights: np.ndarray


def make_bases(mesh: Mesh, materials: MaterialTable, kappa: float, p, lam: float = 1.0) -> list[LocalBasis]:
    """Hammersley bases, ``p`` an int or one count per element."""
    counts = [int(p)] * mesh.n_elements if np.isscalar(p) else [int(c) for c in p]
    if len(counts) != mesh.n_elements:
        raise ValueError("need one direction count per element")
    return [
        LocalBasis(k, DirectionSet.hammersley(c), float(kappa), materials.for_element(mesh, k), lam)
        for k, c in enumerate(counts)
    ]


def dof_count(directions_per_element) -> int:
    """Total unknowns: two polarizations per direction."""
    counts = np.asarray(directions_per_element)
    if counts.size and (not np.all(counts == np.round(counts)) or counts.min() < 1):
        raise ValueError("direction counts must be positive integers")
    return int(2 * np.sum(counts))


def mean_directions(n_elements: int, total_dofs: int) -> float:
    return total_dofs / (2.0 * n_elements)


def _face_eps(mesh, bases, f):
    roots = [abs(np.sqrt(complex(bases[k].eps_r))) for k in mesh.face_elements[f] if k >= 0]
    return max(roots) ** 2


def _face_rule(mesh, bases, kappa, f, safety) -> FaceQuadrature:
    k, i = mesh.face_elements[f, 0], mesh.face_local[f, 0]
    pts, w = composite_face_rule(mesh.face_vertices(k, i), kappa, _face_eps(mesh, bases, f), safety)
    return FaceQuadrature(pts, w)


def _wgram(w, A, B):
    """``M[m, n] = sum_q w_q conj(A[q, m]) . B[q, n]`` for fields of shape ``(nq, n, 3)``."""
    nq = len(w)
    A2 = A.transpose(1, 0, 2).reshape(A.shape[1], 3 * nq)
    B2 = (B * w[:, None, None]).transpose(1, 0, 2).reshape(B.shape[1], 3 * nq)
    return A2.conj() @ B2.T


def _herm(A):
    return 0.5 * (A + A.conj().T)


def assemble_local_D(basis: LocalBasis, faces: Sequence[tuple[np.ndarray, FaceQuadrature, float]]) -> np.ndarray:
    """Gram matrix of outgoing traces over the element boundary.

    ``faces`` lists ``(outward_normal, quadrature, lam)`` for each face of
    the element. ``D[m, n] = sum_F int (1/lam) F+_n . conj(F+_m)``.
    """
    D = np.zeros((basis.size, basis.size), dtype=complex)
    for nu, quad, lam in faces:
        Fp = basis.traces(quad.points, nu, +1, lam)
        D += _wgram(quad.weights / lam, Fp, Fp)
    return _herm(D)


def assemble_coupling(basis_K: LocalBasis, basis_Kp: LocalBasis, nu_K, quad: FaceQuadrature, lam: float) -> np.ndarray:
    """Block coupling the traces of ``K'`` into the equations of ``K``.

    ``C[m, n] = -int (1/lam) F+_{K'}(xi'_n) . conj(F-_K(xi_m))``, with the
    ``K'`` trace built on its own outward normal ``-nu_K``.
    """
    nu_K = np.asarray(nu_K, dtype=float)
    Fm = basis_K.traces(quad.points, nu_K, -1, lam)
    Fp_other = basis_Kp.traces(quad.points, -nu_K, +1, lam)
    return -_wgram(quad.weights / lam, Fm, Fp_other)


def assemble_boundary(basis: LocalBasis, nu, quad: FaceQuadrature, lam: float, Q: float) -> np.ndarray:
    """Reflection block ``Q * int (1/lam) F+_n . conj(F-_m)``."""
    if abs(Q) > 1:
        raise ValueError("|Q| must be <= 1")
    if Q == 0:
        return np.zeros((basis.size, basis.size), dtype=complex)
    Fp = basis.traces(quad.points, nu, +1, lam)
    Fm = basis.traces(quad.points, nu, -1, lam)
    return Q * _wgram(quad.weights / lam, Fm, Fp)


def _tangential_data(g, nu, quad):
    vals = np.asarray(g(quad.points, nu), dtype=complex).reshape(len(quad.weights), 3)
    normal_part = np.abs(vals @ nu)
    if normal_part.size and normal_part.max() > 1e-10 * max(1.0, np.abs(vals).max()):
        raise ValueError("boundary data g is not tangential (nu.g != 0)")
    return vals


def assemble_rhs(basis: LocalBasis, nu, quad: FaceQuadrature, lam: float, g) -> np.ndarray:
    """Load block ``b_m = int (1/lam) g . conj(F-_m)``."""
    nu = np.asarray(nu, dtype=float)
    if g is None:
        return np.zeros(basis.size, dtype=complex)
    vals = _tangential_data(g, nu, quad)
    Fm = basis.traces(quad.points, nu, -1, lam)
    return _wgram(quad.weights / lam, Fm, vals[:, None])[:, 0]


@dataclass(eq=False)
class AssembledSystem:
    """``D x = C x + b`` with ``D`` block diagonal, ``C`` block sparse."""

    mesh: Mesh
    bases: list
    kappa: float
    lam_interior: float
    boundary: dict
    D_blocks: list
    C_blocks: list
    b: np.ndarray
    offsets: np.ndarray
    condition_numbers: np.ndarray
    _C: sp.csr_matrix | None = field(default=None, repr=False)
    _eig: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    @property
    def dof_count(self) -> int:
        return self.n

    def block(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    @property
    def C(self) -> sp.csr_matrix:
        if self._C is None:
            rows, cols, vals = [], [], []
            for blk in self.C_blocks:
                r0, c0 = self.offsets[blk.row], self.offsets[blk.col]
                nr, nc = blk.matrix.shape
                R, Cc = np.meshgrid(np.arange(nr) + r0, np.arange(nc) + c0, indexing="ij")
                rows.append(R.ravel())
                cols.append(Cc.ravel())
                vals.append(blk.matrix.ravel())
            if rows:
                C = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(self.n, self.n)).tocsr()
            else:
                C = sp.csr_matrix((self.n, self.n), dtype=complex)
            C.sum_duplicates()
            self._C = C
        return self._C

    def _eigs(self):
        if not self._eig:
            for D in self.D_blocks:
                w, V = np.linalg.eigh(D)
                floor = 1e-14 * max(abs(w).max(), 1e-300)
                self._eig.append((np.maximum(w, floor), V))
        return self._eig

    def apply_D(self, x):
        y = np.empty_like(x, dtype=complex)
        for k, D in enumerate(self.D_blocks):
            s = self.block(k)
            y[s] = D @ x[s]
        return y

    def solve_D(self, y):
        x = np.empty_like(y, dtype=complex)
        for k, (w, V) in enumerate(self._eigs()):
            s = self.block(k)
            x[s] = V @ ((V.conj().T @ y[s]) / w)
        return x

    def apply_D_power(self, y, power: float):
        """``D**power @ y`` via the blockwise Hermitian eigendecomposition."""
        x = np.empty_like(y, dtype=complex)
        for k, (w, V) in enumerate(self._eigs()):
            s = self.block(k)
            x[s] = V @ ((V.conj().T @ y[s]) * w ** power)
        return x

    def apply_C(self, x):
        return self.C @ x

    def residual(self, x):
        return self.apply_D(x) - self.apply_C(x) - self.b

    def dense_D(self) -> np.ndarray:
        D = np.zeros((self.n, self.n), dtype=complex)
        for k, blk in enumerate(self.D_blocks):
            s = self.block(k)
            D[s, s] = blk
        return D

    def dense_C(self) -> np.ndarray:
        return self.C.toarray()

    def contraction_matrix(self) -> np.ndarray:
        """Dense ``D^{-1/2} C D^{-1/2}`` (Hermitian square roots per block)."""
        left = np.column_stack([self.apply_D_power(col, -0.5) for col in self.dense_C().T])
        # right multiplication by the Hermitian D^{-1/2}: (D^{-1/2} left^H)^H
        return np.column_stack([self.apply_D_power(col, -0.5) for col in left.conj()]).conj().T


def _element_faces(mesh, k, lam_of_face, quads):
    g = mesh.geometry(k)
    return [(g.normals[i], quads[f], lam_of_face(f)) for i, f in enumerate(mesh.element_faces[k])]


def _lam_getter(mesh, boundary, lam_interior):
    def lam_of_face(f):
        if mesh.face_elements[f, 1] >= 0:
            return lam_interior
        return boundary[int(mesh.boundary_tag[f])].lam
    return lam_of_face


def _check_inputs(mesh, bases, boundary):
    if len(bases) != mesh.n_elements:
        raise AssemblyError("every element needs a basis")
    missing = [t for t in mesh.boundary_tags if t not in boundary]
    if missing:
        raise AssemblyError(f"no boundary condition for tag(s) {missing}")
    kappas = {b.kappa for b in bases}
    if len(kappas) != 1:
        raise AssemblyError("all bases must share one wavenumber")
    return kappas.pop()


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def face_quadratures(mesh, bases, kappa, safety=ASSEMBLY_SAFETY, workers=1):
    return _map(lambda f: _face_rule(mesh, bases, kappa, f, safety), range(mesh.n_faces), workers)


def assemble_system(mesh: Mesh, bases: Sequence[LocalBasis], boundary: dict, lam_interior: float = 1.0,
                    cond_cap: float = 1e12, workers: int = 1, safety: int = ASSEMBLY_SAFETY) -> AssembledSystem:
    """Assemble ``D``, ``C`` and ``b`` for the UWVF.

    ``boundary`` maps every boundary tag to a :class:`BoundaryCondition`.
    Blocks are computed independently (optionally on ``workers`` threads)
    and stored in fixed slots, so the result does not depend on scheduling.
    """
    kappa = _check_inputs(mesh, bases, boundary)
    if any(complex(b.eps_r).imag > 0 for b in bases):
        warnings.warn("convergence unproven for complex permittivity", AbsorbingMediumWarning, stacklevel=2)
    quads = face_quadratures(mesh, bases, kappa, safety, workers)
    lam_of_face = _lam_getter(mesh, boundary, lam_interior)

    def element_work(k):
        basis = bases[k]
        D = assemble_local_D(basis, _element_faces(mesh, k, lam_of_face, quads))
        b = np.zeros(basis.size, dtype=complex)
        g = mesh.geometry(k)
        for i, f in enumerate(mesh.element_faces[k]):
            if mesh.face_elements[f, 1] < 0:
                bc = boundary[int(mesh.boundary_tag[f])]
                b += assemble_rhs(basis, g.normals[i], quads[f], bc.lam, bc.data)
        ev = np.linalg.eigvalsh(D)
        cond = np.inf if ev[0] <= 1e-14 * ev[-1] else ev[-1] / ev[0]
        return D, b, cond

    elem = _map(element_work, range(mesh.n_elements), workers)
    conds = np.array([c for _, _, c in elem])
    bad = [k for k, c in enumerate(conds) if not c <= cond_cap]
    if bad:
        detail = ", ".join(f"element {k} (p_K={len(bases[k].directions)}, cond={conds[k]:.3g})" for k in bad)
        raise AssemblyError(f"ill-conditioned local Gram matrices: {detail}", bad)

    def face_work(f):
        out = []
        k0, k1 = mesh.face_elements[f]
        i0 = mesh.face_local[f, 0]
        nu0 = mesh.geometry(k0).normals[i0]
        if k1 >= 0:
            lam = lam_interior
            out.append(CouplingBlock(int(k0), int(k1), f, assemble_coupling(bases[k0], bases[k1], nu0, quads[f], lam)))
            out.append(CouplingBlock(int(k1), int(k0), f, assemble_coupling(bases[k1], bases[k0], -nu0, quads[f], lam)))
        else:
            bc = boundary[int(mesh.boundary_tag[f])]
            if bc.Q != 0:
                out.append(CouplingBlock(int(k0), int(k0), f, assemble_boundary(bases[k0], nu0, quads[f], bc.lam, bc.Q)))
        return out

    C_blocks = [blk for blocks in _map(face_work, range(mesh.n_faces), workers) for blk in blocks]
    offsets = np.concatenate([[0], np.cumsum([b.size for b in bases])])
    return AssembledSystem(
        mesh=mesh,
        bases=list(bases),
        kappa=kappa,
        lam_interior=lam_interior,
        boundary=dict(boundary),
        D_blocks=[d for d, _, _ in elem],
        C_blocks=C_blocks,
        b=np.concatenate([b for _, b, _ in elem]),
        offsets=offsets,
        condition_numbers=conds,
    )


def _cross(nu, v):
    return np.cross(np.broadcast_to(nu, v.shape), v)


def assemble_tipdg(mesh: Mesh, bases: Sequence[LocalBasis], boundary: dict, params: TIPDGParams = TIPDGParams(),
                   lam_interior: float = 1.0, equivalence_check: bool = False, workers: int = 1,
                   safety: int = ASSEMBLY_SAFETY):
    """Face-only Trefftz-IPDG matrix ``A`` and load ``r`` (zero volume source).

    Rows are test functions, columns trial functions, both the element
    plane waves. Interior faces carry

        -{{curl E}}.[[xi]]* - {{E}}.[[curl xi]]*
        + 1j*kappa*lam*alpha [[E]].[[xi]]* - beta/(1j*kappa*lam) [[curl E]].[[curl xi]]*

    with ``[[v]] = nu+ x v+ + nu- x v-`` and ``{{v}} = (v+ + v-)/2``. Boundary
    faces use the fluxes ``nu x C = nu x curl E - (1-delta) R`` and
    ``E_hat = E_T + delta/(1j*kappa*lam) R`` where ``R`` is the residual of
    the impedance condition.
    """
    kappa = _check_inputs(mesh, bases, boundary)
    if equivalence_check and any(complex(b.eps_r).imag != 0 for b in bases):
        raise AssemblyError("UWVF/Trefftz-IPDG equivalence does not hold for absorbing media (complex eps_r)")
    alpha, beta, delta = params.alpha, params.beta, params.delta
    quads = face_quadratures(mesh, bases, kappa, safety, workers)
    offsets = np.concatenate([[0], np.cumsum([b.size for b in bases])])
    n = int(offsets[-1])

    def face_work(f):
        quad = quads[f]
        w = quad.weights
        k0, k1 = mesh.face_elements[f]
        nu0 = mesh.geometry(k0).normals[mesh.face_local[f, 0]]
        blocks = []
        if k1 >= 0:
            ik = 1j * kappa * lam_interior
            sides = []
            for k, nu in ((k0, nu0), (k1, -nu0)):
                E, cE = bases[k].evaluate(quad.points)
                sides.append((k, _cross(nu, E), E / 2, _cross(nu, cE), cE / 2))
            for t, jx, ax, jcx, acx in sides:
                for s, jE, aE, jcE, acE in sides:
                    M = (-_wgram(w, jx, acE)
                         - _wgram(w, jcx, aE)
                         + alpha * ik * _wgram(w, jx, jE)
                         - beta / ik * _wgram(w, jcx, jcE))
                    blocks.append((int(t), int(s), M))
            return blocks, None
        bc = boundary[int(mesh.boundary_tag[f])]
        ik = 1j * kappa * bc.lam
        Q = bc.Q
        E, cE = bases[k0].evaluate(quad.points)
        a = _cross(nu0, cE)
        bT = E - np.einsum("qnd,d->qn", E, nu0)[..., None] * nu0
        R = (1 - Q) * a - ik * (1 + Q) * bT
        flux_c = a - (1 - delta) * R
        flux_e = bT + delta / ik * R
        M = (_wgram(w, bT, flux_c)
             - _wgram(w, a, flux_e))
        rhs = None
        if bc.data is not None:
            g = _tangential_data(bc.data, nu0, quad)
            rhs = -((1 - delta) * _wgram(w, bT, g[:, None])[:, 0]
                    + delta / ik * _wgram(w, a, g[:, None])[:, 0])
        return [(int(k0), int(k0), M)], (int(k0), rhs)

    A = np.zeros((n, n), dtype=complex)
    r = np.zeros(n, dtype=complex)
    for blocks, load in _map(face_work, range(mesh.n_faces), workers):
        for t, s, M in blocks:
            A[offsets[t]:offsets[t + 1], offsets[s]:offsets[s + 1]] += M
        if load is not None and load[1] is not None:
            k = load[0]
            r[offsets[k]:offsets[k + 1]] += load[1]
    return A, r


def dump_system(system: AssembledSystem) -> str:
    """ASCII dump: one header line per block, then row-major ``re im`` pairs."""

    def rows(M):
        M = np.atleast_2d(M)
        return [" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) for row in M]

    out = [f"uwvf-system 1 {system.mesh.n_elements} {len(system.C_blocks)} {system.n}"]
    for k, D in enumerate(system.D_blocks):
        out.append(f"D {k} {D.shape[0]} {D.shape[1]}")
        out += rows(D)
    for blk in system.C_blocks:
        out.append(f"C {blk.row} {blk.col} {blk.face} {blk.matrix.shape[0]} {blk.matrix.shape[1]}")
        out += rows(blk.matrix)
    for k in range(system.mesh.n_elements):
        bk = system.b[system.block(k)]
        out.append(f"b {k} {len(bk)}")
        out += rows(bk[None])
    return "\n".join(out) + "\n"
