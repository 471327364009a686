"""Field reconstruction, manufactured plane-wave data, error norms, slices."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mesh import Mesh
from .planewave import LocalBasis, eval_plane_wave, polarization_pair, trace_values
from .quadrature import face_quadrature_order, map_tetrahedron_rule, tetrahedron_rule

__all__ = [
    "ExactSolution",
    "FieldSample",
    "ErrorNorms",
    "block_offsets",
    "reconstruct_field",
    "manufacture_boundary_data",
    "manufactured_data",
    "error_norms",
    "locate_points",
    "sample_slice",
    "write_slice_csv",
    "SLICE_COLUMNS",
]

_BARY_TOL = 1e-12


@dataclass(frozen=True)
class ExactSolution:
    """Global plane wave ``p exp(1j*kappa*sqrt(eps_r) d.x)`` in a uniform medium."""

    d: np.ndarray
    p: np.ndarray
    kappa: float
    eps_r: complex = 1.0

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if abs(np.linalg.norm(d) - 1) > 1e-12 or abs(np.linalg.norm(p) - 1) > 1e-12:
            raise ValueError("d and p must be unit vectors")
        if abs(d @ p) > 1e-12:
            raise ValueError("polarization must be orthogonal to the direction")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "p", p)

    @classmethod
    def along(cls, d, kappa: float, eps_r: complex = 1.0, which: int = 0) -> "ExactSolution":
        """Plane wave along ``d`` using the standard polarization rule."""
        d = np.asarray(d, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(d, polarization_pair(d)[which], kappa, eps_r)

    def evaluate(self, x):
        return eval_plane_wave(self.d, self.p, self.kappa, self.eps_r, x, conjugate_medium=False)

    __call__ = evaluate


@dataclass(frozen=True)
class FieldSample:
    point: np.ndarray
    E: np.ndarray
    element: int  # -1 when outside the mesh


@dataclass(frozen=True)
class ErrorNorms:
    volume_abs: float
    volume_rel: float
    trace_abs: float
    trace_rel: float


def block_offsets(bases: Sequence[LocalBasis]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([b.size for b in bases])]).astype(int)


def _barycentric(mesh: Mesh, k: int, x):
    p = mesh.tet_vertices(k)
    T = (p[1:] - p[0]).T
    lam = np.linalg.solve(T, (np.atleast_2d(x) - p[0]).T).T
    return np.column_stack([1 - lam.sum(axis=1), lam])


def reconstruct_field(chi, mesh: Mesh, bases: Sequence[LocalBasis], k: int, x, check: bool = True):
    """``E_h(x) = sum_n chi_n xi_n(x)`` on element ``k``.

    Returns shape ``(3,)`` for one point or ``(n, 3)`` for ``n`` points.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if check and np.any(_barycentric(mesh, k, pts).min(axis=1) < -_BARY_TOL):
        raise ValueError(f"point outside element {k}")
    offs = block_offsets(bases)
    coeffs = np.asarray(chi)[offs[k]:offs[k + 1]]
    E, _ = bases[k].evaluate(pts)
    out = np.einsum("qnd,n->qd", E, coeffs)
    return out[0] if single else out


def _reconstruct_with_curl(chi, bases, offs, k, pts):
    E, curl = bases[k].evaluate(pts)
    c = np.asarray(chi)[offs[k]:offs[k + 1]]
    return np.einsum("qnd,n->qd", E, c), np.einsum("qnd,n->qd", curl, c)


def manufacture_boundary_data(exact: ExactSolution, normal, Q: float, lam: float):
    """Evaluator ``g(x)`` on a face so that ``exact`` satisfies the impedance condition.

    ``g = (nu x curl E - 1j*kappa*lam*E_T) - Q (nu x curl E + 1j*kappa*lam*E_T)``.
    """
    nu = np.asarray(normal, dtype=float)

    def g(x):
        E, curl = exact.evaluate(x)
        return (trace_values(E, curl, nu, exact.kappa, lam, -1)
                - Q * trace_values(E, curl, nu, exact.kappa, lam, +1))

    return g


def manufactured_data(exact: ExactSolution, Q: float, lam: float):
    """Boundary data callable ``g(x, normal)`` for :class:`BoundaryCondition`."""

    def data(x, normal):
        return manufacture_boundary_data(exact, normal, Q, lam)(x)

    return data


def error_norms(chi, mesh: Mesh, bases: Sequence[LocalBasis], exact: ExactSolution,
                boundary: dict | None = None, lam_interior: float = 1.0, safety: int = 6) -> ErrorNorms:
    """Volume L2 error and weighted outgoing-trace error of the reconstruction.

    Trace error is ``(sum_K sum_F int (1/lam) |F+(E_h - E)|^2)^(1/2)``.
    """
    from .assembly import face_quadratures  # local: assembly imports nothing from here

    offs = block_offsets(bases)
    kappa = bases[0].kappa
    vol_err = vol_ref = 0.0
    for k in range(mesh.n_elements):
        g = mesh.geometry(k)
        order = face_quadrature_order(kappa, bases[k].eps_r, g.h_K, safety)
        pts, w = map_tetrahedron_rule(tetrahedron_rule(order), mesh.tet_vertices(k))
        Eh, _ = _reconstruct_with_curl(chi, bases, offs, k, pts)
        E, _ = exact.evaluate(pts)
        vol_err += float(w @ np.sum(np.abs(Eh - E) ** 2, axis=1))
        vol_ref += float(w @ np.sum(np.abs(E) ** 2, axis=1))

    quads = face_quadratures(mesh, bases, kappa)
    tr_err = tr_ref = 0.0
    for k in range(mesh.n_elements):
        g = mesh.geometry(k)
        for i, f in enumerate(mesh.element_faces[k]):
            if mesh.face_elements[f, 1] >= 0 or boundary is None:
                lam = lam_interior if mesh.face_elements[f, 1] >= 0 else bases[k].lam
            else:
                lam = boundary[int(mesh.boundary_tag[f])].lam
            q = quads[f]
            Eh, cEh = _reconstruct_with_curl(chi, bases, offs, k, q.points)
            E, cE = exact.evaluate(q.points)
            Fd = trace_values(Eh - E, cEh - cE, g.normals[i], kappa, lam, +1)
            Fe = trace_values(E, cE, g.normals[i], kappa, lam, +1)
            tr_err += float(q.weights @ np.sum(np.abs(Fd) ** 2, axis=1)) / lam
            tr_ref += float(q.weights @ np.sum(np.abs(Fe) ** 2, axis=1)) / lam
    va, ta = np.sqrt(vol_err), np.sqrt(tr_err)
    return ErrorNorms(va, va / np.sqrt(vol_ref), ta, ta / np.sqrt(tr_ref))


def locate_points(mesh: Mesh, x) -> np.ndarray:
    """Owning element of each point (lowest index on shared boundaries), ``-1`` outside."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    owner = -np.ones(len(pts), dtype=int)
    for k in range(mesh.n_elements):
        todo = owner < 0
        if not todo.any():
            break
        inside = _barycentric(mesh, k, pts[todo]).min(axis=1) >= -_BARY_TOL
        idx = np.flatnonzero(todo)[inside]
        owner[idx] = k
    return owner


def sample_slice(chi, mesh: Mesh, bases: Sequence[LocalBasis], origin, u, v, resolution) -> list[FieldSample]:
    """Sample ``E_h`` on the grid ``origin + s*u + t*v``, ``s, t`` in ``[0, 1]``.

    ``resolution`` is ``(nu, nv)``; samples are ordered with ``t`` fastest.
    """
    nu_, nv_ = (int(r) for r in resolution)
    if nu_ < 1 or nv_ < 1:
        raise ValueError("resolution must be positive")
    s = np.linspace(0.0, 1.0, nu_) if nu_ > 1 else np.zeros(1)
    t = np.linspace(0.0, 1.0, nv_) if nv_ > 1 else np.zeros(1)
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = (np.asarray(origin, dtype=float)[None] + S.ravel()[:, None] * np.asarray(u, dtype=float)
           + T.ravel()[:, None] * np.asarray(v, dtype=float))
    owner = locate_points(mesh, pts)
    E = np.zeros((len(pts), 3), dtype=complex)
    for k in np.unique(owner[owner >= 0]):
        sel = owner == k
        E[sel] = reconstruct_field(chi, mesh, bases, int(k), pts[sel], check=False)
    return [FieldSample(pts[i], E[i], int(owner[i])) for i in range(len(pts))]


SLICE_COLUMNS = ["x", "y", "z", "ReEx", "ImEx", "ReEy", "ImEy", "ReEz", "ImEz", "element"]


def write_slice_csv(samples: Sequence[FieldSample], stream=None) -> str:
    """CSV with one row per sample; ``element`` is ``-1`` for points outside the mesh."""
    buf = io.StringIO() if stream is None else stream
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SLICE_COLUMNS)
    for smp in samples:
        row = [f"{c:.17g}" for c in smp.point]
        for z in smp.E:
            row += [f"{z.real:.17g}", f"{z.imag:.17g}"]
        row.append(str(smp.element))
        w.writerow(row)
    return buf.getvalue() if stream is None else ""
