"""Iterative solution of the UWVF system and per-element direction counts."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .assembly import AssembledSystem, _element_faces, assemble_local_D, face_quadratures
from .mesh import MaterialTable, Mesh
from .planewave import DirectionSet, LocalBasis

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SolverError",
    "DirectionAdaptError",
    "iteration_operator",
    "solve_stationary",
    "solve_bicgstab",
    "solve",
    "adapt_directions",
    "DIRECTION_STEP",
]

DIRECTION_STEP = 4
MAX_RESTARTS = 3
DIVERGENCE_FACTOR = 1e6


class SolverError(RuntimeError):
    pass


class DirectionAdaptError(RuntimeError):
    def __init__(self, element: int, p: int, cond: float):
        super().__init__(f"element {element}: cond(D_K)={cond:.3g} exceeds the cap even at p_K={p}")
        self.element = element


@dataclass(frozen=True)
class SolverConfig:
    method: str = "bicgstab"
    tol: float = 1e-5
    max_iter: int = 5000
    cond_cap: float = 1e12
    p_min: int = 1
    p_max: int = 67
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("bicgstab", "stationary"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.p_min < 1 or self.p_max < self.p_min:
            raise ValueError("need 1 <= p_min <= p_max")


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    converged: bool
    residual_history: list = field(default_factory=list)
    wall_time: float = 0.0
    restarts: int = 0
    residual_euclidean: float = 0.0
    residual_dweighted: float = 0.0
    condition_numbers: np.ndarray | None = None


def _dnorm(system, r):
    # ||r||_{D^{-1}}: the norm in which the fixed-point map is non-expansive
    return float(np.sqrt(max(np.vdot(r, system.solve_D(r)).real, 0.0)))


def _final_residuals(system, x):
    f = system.solve_D(system.b)
    nf = np.linalg.norm(f)
    r_e = f - (x - system.solve_D(system.apply_C(x)))
    r = system.residual(x)
    nb = _dnorm(system, system.b)
    return (np.linalg.norm(r_e) / nf if nf else 0.0), (_dnorm(system, r) / nb if nb else 0.0)


def iteration_operator(system: AssembledSystem) -> LinearOperator:
    """``x -> x - D^{-1} C x`` as a matrix-free operator."""
    return LinearOperator((system.n, system.n), matvec=lambda x: x - system.solve_D(system.apply_C(x)),
                          dtype=complex)


def solve_stationary(system: AssembledSystem, config: SolverConfig = SolverConfig()):
    """Fixed-point sweep ``x <- D^{-1}(C x + b)`` from zero.

    Stops when the ``D^{-1}``-weighted residual ``||D x - C x - b||`` falls to
    ``tol`` relative to ``||b||``.
    """
    t0 = time.perf_counter()
    x = np.zeros(system.n, dtype=complex)
    nb = _dnorm(system, system.b)
    hist = []
    if nb == 0:
        return x, SolveReport("stationary", 0, 0.0, True, [0.0], time.perf_counter() - t0,
                              condition_numbers=system.condition_numbers)
    it = 0
    while True:
        res = _dnorm(system, system.residual(x)) / nb
        hist.append(res)
        if res <= config.tol or it >= config.max_iter:
            break
        x = system.solve_D(system.apply_C(x) + system.b)
        it += 1
    r_e, r_d = _final_residuals(system, x)
    return x, SolveReport("stationary", it, hist[-1], hist[-1] <= config.tol, hist, time.perf_counter() - t0,
                          0, r_e, r_d, system.condition_numbers)


def solve_bicgstab(system: AssembledSystem, config: SolverConfig = SolverConfig()):
    """BiCGstab on ``(I - D^{-1} C) x = D^{-1} b`` with Euclidean stopping test.

    A vanishing ``rho`` or ``omega`` restarts from the current iterate (at
    most three times).
    """
    t0 = time.perf_counter()
    A = iteration_operator(system)
    f = system.solve_D(system.b)
    nf = np.linalg.norm(f)
    x = np.zeros(system.n, dtype=complex)
    if nf == 0:
        return x, SolveReport("bicgstab", 0, 0.0, True, [0.0], time.perf_counter() - t0,
                              condition_numbers=system.condition_numbers)
    tol = config.tol * nf
    r = f - A.matvec(x)
    r0norm = np.linalg.norm(r)
    hist = [r0norm / nf]
    it = restarts = 0

    def start(r):
        return r.copy(), r.copy(), np.vdot(r, r)

    rhat, p, rho = start(r)
    while np.linalg.norm(r) > tol and it < config.max_iter:
        v = A.matvec(p)
        denom = np.vdot(rhat, v)
        tiny = np.finfo(float).eps * np.linalg.norm(rhat) * np.linalg.norm(v)
        if abs(denom) <= tiny or abs(rho) <= np.finfo(float).eps * np.linalg.norm(rhat) * np.linalg.norm(r):
            restarts += 1
            if restarts > MAX_RESTARTS:
                raise SolverError(f"BiCGstab breakdown after {MAX_RESTARTS} restarts")
            r = f - A.matvec(x)
            rhat, p, rho = start(r)
            continue
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= tol:
            x = x + alpha * p
            r = s
            it += 1
            hist.append(np.linalg.norm(r) / nf)
            break
        t = A.matvec(s)
        tt = np.vdot(t, t)
        omega = np.vdot(t, s) / tt if tt else 0.0
        x = x + alpha * p + omega * s
        r = s - omega * t
        it += 1
        nr = np.linalg.norm(r)
        hist.append(nr / nf)
        if nr > DIVERGENCE_FACTOR * r0norm or not np.isfinite(nr):
            raise SolverError(f"BiCGstab diverged at iteration {it}")
        if omega == 0:
            restarts += 1
            if restarts > MAX_RESTARTS:
                raise SolverError(f"BiCGstab breakdown after {MAX_RESTARTS} restarts")
            rhat, p, rho = start(r)
            continue
        rho_new = np.vdot(rhat, r)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
    r_e, r_d = _final_residuals(system, x)
    return x, SolveReport("bicgstab", it, r_e, r_e <= config.tol, hist, time.perf_counter() - t0,
                          restarts, r_e, r_d, system.condition_numbers)


def solve(system: AssembledSystem, config: SolverConfig = SolverConfig()):
    if config.method == "stationary":
        return solve_stationary(system, config)
    return solve_bicgstab(system, config)


def adapt_directions(mesh: Mesh, materials: MaterialTable, kappa: float, config: SolverConfig,
                     boundary: dict | None = None, lam_interior: float = 1.0, workers: int = 1):
    """Per-element direction counts keeping ``cond(D_K)`` under ``config.cond_cap``.

    Each element starts at ``p_max`` and drops by 4 (never below ``p_min``)
    until its local Gram matrix is acceptable. Returns ``(counts, conds)``.
    """
    boundary = boundary or {}
    probe = [LocalBasis(k, DirectionSet.hammersley(1), float(kappa), materials.for_element(mesh, k))
             for k in range(mesh.n_elements)]
    quads = face_quadratures(mesh, probe, kappa, workers=workers)

    def lam_of_face(f):
        if mesh.face_elements[f, 1] >= 0:
            return lam_interior
        bc = boundary.get(int(mesh.boundary_tag[f]))
        return 1.0 if bc is None else bc.lam

    def work(k):
        faces = _element_faces(mesh, k, lam_of_face, quads)
        p = config.p_max
        while True:
            basis = LocalBasis(k, DirectionSet.hammersley(p), float(kappa), materials.for_element(mesh, k))
            ev = np.linalg.eigvalsh(assemble_local_D(basis, faces))
            cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
            if cond <= config.cond_cap:
                return p, cond
            if p <= config.p_min:
                raise DirectionAdaptError(k, p, cond)
            p = max(p - DIRECTION_STEP, config.p_min)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(work, range(mesh.n_elements)))
    else:
        out = [work(k) for k in range(mesh.n_elements)]
    return np.array([p for p, _ in out], dtype=int), np.array([c for _, c in out])
