"""scikit-learn style front end: ``fit`` solves on a mesh, ``predict`` samples the field."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .assembly import BoundaryCondition, TIPDGParams, assemble_system, assemble_tipdg, make_bases
from .mesh import MaterialTable, Mesh
from .postprocess import ExactSolution, locate_points, manufactured_data, reconstruct_field
from .solve import SolverConfig, solve

__all__ = ["UWVFMaxwell", "TrefftzIPDGMaxwell"]


def _check_points(X):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 3:
        raise ValueError(f"expected points with 3 coordinates, got {X.shape[1]}")
    return X


class UWVFMaxwell(BaseEstimator):
    """Plane-wave UWVF solver for ``curl curl E - kappa^2 eps_r E = 0``.

    Parameters
    ----------
    kappa : float
        Wavenumber.
    n_directions : int
        Hammersley directions per element (two basis functions each).
    eps_r : complex or dict
        Relative permittivity, uniform or keyed by region id.
    Q, lam : float or dict
        Reflection coefficient and impedance weight, uniform or per boundary tag.
    lam_interior : float
        Impedance weight on interior faces.
    method, tol, max_iter, cond_cap :
        Passed to :class:`~uwvf.solve.SolverConfig`.
    n_jobs : int
        Assembly threads.
    """

    def __init__(self, kappa=1.0, n_directions=13, eps_r=1.0, Q=0.0, lam=1.0, lam_interior=1.0,
                 method="bicgstab", tol=1e-5, max_iter=5000, cond_cap=1e12, n_jobs=1):
        self.kappa = kappa
        self.n_directions = n_directions
        self.eps_r = eps_r
        self.Q = Q
        self.lam = lam
        self.lam_interior = lam_interior
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.cond_cap = cond_cap
        self.n_jobs = n_jobs

    def _materials(self, mesh):
        if isinstance(self.eps_r, dict):
            return MaterialTable({r: complex(self.eps_r[r]) for r in mesh.regions})
        return MaterialTable.uniform(mesh, self.eps_r)

    def _boundary(self, mesh, data):
        out = {}
        for tag in mesh.boundary_tags:
            Q = self.Q[tag] if isinstance(self.Q, dict) else self.Q
            lam = self.lam[tag] if isinstance(self.lam, dict) else self.lam
            if isinstance(data, ExactSolution):
                g = manufactured_data(data, Q, lam)
            elif isinstance(data, dict):
                g = data.get(tag)
            else:
                g = data
            out[tag] = BoundaryCondition(float(Q), float(lam), g)
        return out

    def _setup(self, mesh, boundary_data):
        if not isinstance(mesh, Mesh):
            raise TypeError("fit expects a uwvf.mesh.Mesh")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        self.mesh_ = mesh
        self.materials_ = self._materials(mesh)
        self.boundary_ = self._boundary(mesh, boundary_data)
        self.bases_ = make_bases(mesh, self.materials_, self.kappa, self.n_directions)

    def fit(self, mesh, boundary_data=None):
        """Assemble and solve.

        ``boundary_data`` is an :class:`ExactSolution` (data manufactured from
        it), a callable ``g(x, normal)``, a dict of such callables per tag, or
        ``None`` for homogeneous data.
        """
        self._setup(mesh, boundary_data)
        self.system_ = assemble_system(mesh, self.bases_, self.boundary_, self.lam_interior, self.cond_cap,
                                       self.n_jobs)
        config = SolverConfig(method=self.method, tol=self.tol, max_iter=self.max_iter, cond_cap=self.cond_cap)
        self.coef_, self.report_ = solve(self.system_, config)
        self.n_dofs_ = self.system_.dof_count
        return self

    def predict(self, X):
        """Complex field ``E_h`` at points ``X`` (``nan`` outside the mesh)."""
        check_is_fitted(self, "coef_")
        X = _check_points(X)
        owner = locate_points(self.mesh_, X)
        out = np.full((len(X), 3), np.nan + 0j)
        for k in np.unique(owner[owner >= 0]):
            sel = owner == k
            out[sel] = reconstruct_field(self.coef_, self.mesh_, self.bases_, int(k), X[sel], check=False)
        return out

    def score(self, X, y):
        """``1 - ||E_h - y||^2 / ||y||^2`` over the sample points."""
        pred = self.predict(X)
        y = np.asarray(y, dtype=complex).reshape(pred.shape)
        return float(1.0 - np.sum(np.abs(pred - y) ** 2) / np.sum(np.abs(y) ** 2))


class TrefftzIPDGMaxwell(UWVFMaxwell):
    """Same plane-wave space with face-only Trefftz-IPDG fluxes, solved densely."""

    def __init__(self, kappa=1.0, n_directions=13, eps_r=1.0, Q=0.0, lam=1.0, lam_interior=1.0,
                 alpha=0.5, beta=0.5, delta=0.5, n_jobs=1):
        super().__init__(kappa=kappa, n_directions=n_directions, eps_r=eps_r, Q=Q, lam=lam,
                         lam_interior=lam_interior, n_jobs=n_jobs)
        self.alpha = alpha
        self.beta = beta
        self.delta = delta

    def fit(self, mesh, boundary_data=None):
        self._setup(mesh, boundary_data)
        A, r = assemble_tipdg(mesh, self.bases_, self.boundary_, TIPDGParams(self.alpha, self.beta, self.delta),
                              self.lam_interior, workers=self.n_jobs)
        self.coef_ = np.linalg.solve(A, r)
        self.n_dofs_ = len(r)
        return self
