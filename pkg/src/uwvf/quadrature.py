"""Triangle and tetrahedron quadrature, plus an adaptive oscillatory oracle.

Rules are built from collapsed (Duffy) Gauss-Jacobi tensor rules and then
symmetrized over all vertex permutations of the reference simplex, so each
rule is invariant under vertex relabeling and keeps its polynomial degree.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "MAX_ORDER",
    "QuadratureAccuracyWarning",
    "QuadratureRule",
    "OracleConvergenceError",
    "triangle_rule",
    "tetrahedron_rule",
    "face_quadrature_order",
    "map_triangle_rule",
    "map_tetrahedron_rule",
    "subdivide_triangle",
    "composite_face_rule",
    "ASSEMBLY_SAFETY",
    "oscillatory_face_oracle",
]

MAX_ORDER = 20


class QuadratureAccuracyWarning(UserWarning):
    """Requested accuracy exceeds what the highest supported order delivers."""


class OracleConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on a reference simplex.

    ``bary`` holds barycentric coordinates (one row per node, columns sum to
    one); ``weights`` are with respect to the reference measure (1/2 for the
    triangle, 1/6 for the tetrahedron).
    """

    order: int
    bary: np.ndarray
    weights: np.ndarray

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    @property
    def points(self) -> np.ndarray:
        """Cartesian reference coordinates (drop the first barycentric)."""
        return self.bary[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _gauss_jacobi01(m: int, alpha: int):
    # nodes/weights on [0, 1] for the weight (1 - s)**alpha
    x, w = roots_jacobi(m, alpha, 0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def _check_order(order: int) -> int:
    if int(order) != order or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"unsupported quadrature order {order!r}; expected 1..{MAX_ORDER}")
    return int(order)


def _symmetrize(bary: np.ndarray, weights: np.ndarray):
    nvert = bary.shape[1]
    perms = list(itertools.permutations(range(nvert)))
    sym_b = np.concatenate([bary[:, p] for p in perms])
    sym_w = np.concatenate([weights for _ in perms]) / len(perms)
    # the collapsed rule is already mirror-symmetric, so half the images coincide
    _, first, inverse = np.unique(np.round(sym_b, 13), axis=0, return_index=True, return_inverse=True)
    merged_w = np.zeros(len(first))
    np.add.at(merged_w, inverse.ravel(), sym_w)
    return sym_b[first], merged_w


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle exact to total degree ``order``."""
    order = _check_order(order)
    if order == 1:
        return QuadratureRule(1, np.full((1, 3), 1.0 / 3.0), np.array([0.5]))
    m = (order + 2) // 2
    s, ws = _gauss_jacobi01(m, 1)
    t, wt = _gauss_jacobi01(m, 0)
    S, T = np.meshgrid(s, t, indexing="ij")
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    w = np.outer(ws, wt).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    bary, w = _symmetrize(bary, w)
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order, bary, w)


@lru_cache(maxsize=None)
def tetrahedron_rule(order: int) -> QuadratureRule:
    """Symmetric rule on the reference tetrahedron exact to total degree ``order``."""
    order = _check_order(order)
    if order == 1:
        return QuadratureRule(1, np.full((1, 4), 0.25), np.array([1.0 / 6.0]))
    m = (order + 2) // 2
    s, ws = _gauss_jacobi01(m, 2)
    t, wt = _gauss_jacobi01(m, 1)
    u, wu = _gauss_jacobi01(m, 0)
    S, T, U = np.meshgrid(s, t, u, indexing="ij")
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    z = ((1.0 - S) * (1.0 - T) * U).ravel()
    w = np.einsum("i,j,k->ijk", ws, wt, wu).ravel()
    bary = np.column_stack([1.0 - x - y - z, x, y, z])
    bary, w = _symmetrize(bary, w)
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order, bary, w)


def face_quadrature_order(kappa: float, eps_r: complex, h: float, safety: int = 6,
                          warn: bool = False) -> int:
    """Polynomial order used for integrals over a face (or element) of size ``h``.

    ``min(20, ceil(kappa*|sqrt(eps_r)|*h) + safety)``. With ``warn=True`` a
    :class:`QuadratureAccuracyWarning` is raised when the clamp is active.
    """
    if kappa <= 0 or h <= 0:
        raise ValueError("kappa and h must be positive")
    raw = math.ceil(kappa * abs(np.sqrt(complex(eps_r))) * h) + int(safety)
    if raw > MAX_ORDER and warn:
        warnings.warn(
            f"quadrature order {raw} requested for kappa*h={kappa * h:.3g}; clamped to {MAX_ORDER}",
            QuadratureAccuracyWarning,
            stacklevel=2,
        )
    return max(1, min(MAX_ORDER, raw))


def map_triangle_rule(rule: QuadratureRule, tri: np.ndarray):
    """Physical nodes ``(nq, 3)`` and weights for triangle(s) ``tri``.

    ``tri`` is ``(3, 3)`` or a stack ``(n, 3, 3)`` of vertex rows; stacked
    input returns all nodes concatenated triangle by triangle.
    """
    tri = np.asarray(tri, dtype=float)
    single = tri.ndim == 2
    if single:
        tri = tri[None]
    pts = np.einsum("qa,tad->tqd", rule.bary, tri)
    area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    w = area2[:, None] * rule.weights[None, :]
    return pts.reshape(-1, 3), w.reshape(-1)


def map_tetrahedron_rule(rule: QuadratureRule, tet: np.ndarray):
    tet = np.asarray(tet, dtype=float)
    pts = rule.bary @ tet
    vol6 = abs(np.linalg.det(tet[1:] - tet[0]))
    return pts, vol6 * rule.weights


def subdivide_triangle(tri: np.ndarray, levels: int) -> np.ndarray:
    """Uniform red refinement: ``4**levels`` congruent sub-triangles."""
    tris = np.asarray(tri, dtype=float)[None]
    for _ in range(levels):
        tris = _refine(tris)
    return tris


# order margin used for plane-wave products: the integrand oscillates at up
# to 2*kappa*|sqrt(eps_r)|, and the collapsed rules need the extra degrees
ASSEMBLY_SAFETY = 14


def composite_face_rule(tri: np.ndarray, kappa: float, eps_r: complex,
                        safety: int = ASSEMBLY_SAFETY):
    """Nodes and weights for plane-wave products on a flat face.

    Uses :func:`face_quadrature_order` directly when it does not clamp.
    Otherwise the face is split uniformly into ``4**L`` pieces, with ``L``
    the smallest level at which the per-piece order fits, and a
    :class:`QuadratureAccuracyWarning` is emitted.
    """
    tri = np.asarray(tri, dtype=float)
    h = max(np.linalg.norm(tri[i] - tri[j]) for i, j in ((0, 1), (1, 2), (2, 0)))
    ksh = kappa * abs(np.sqrt(complex(eps_r))) * h
    levels = 0
    while math.ceil(ksh / 2.0 ** levels) + safety > MAX_ORDER:
        levels += 1
        if levels > 10 or safety >= MAX_ORDER:
            raise ValueError(f"cannot resolve face with kappa*h={ksh:.3g} at safety {safety}")
    if levels:
        warnings.warn(
            f"face with kappa*|sqrt(eps)|*h={ksh:.3g} exceeds order {MAX_ORDER}; "
            f"split into {4 ** levels} pieces",
            QuadratureAccuracyWarning,
            stacklevel=2,
        )
    order = face_quadrature_order(kappa, eps_r, h / 2.0 ** levels, safety)
    return map_triangle_rule(triangle_rule(order), subdivide_triangle(tri, levels))


# Radon's 7-point degree-5 rule (reference measure 1/2); used only by the oracle
_A1, _B1 = (6 - math.sqrt(15)) / 21, (9 + 2 * math.sqrt(15)) / 21
_A2, _B2 = (6 + math.sqrt(15)) / 21, (9 - 2 * math.sqrt(15)) / 21
_W1, _W2 = (155 - math.sqrt(15)) / 2400, (155 + math.sqrt(15)) / 2400
_RADON_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
_RADON_W = np.array([9 / 80, _W1, _W1, _W1, _W2, _W2, _W2])


def oscillatory_face_oracle(kc: complex, d, tri, rtol: float = 1e-13,
                            max_levels: int = 12, min_levels: int = 2) -> complex:
    """Reference value of ``int_T exp(1j*kc*d.x) dA`` by repeated refinement.

    Independent of the production rules: a fixed degree-5 Radon rule is
    applied on uniformly refined copies of ``T`` until two successive levels
    agree to ``rtol`` (relative to ``int_T |exp(...)| dA``). ``d`` may be any
    real or complex 3-vector, so general complex wave vectors are covered.
    """
    tri = np.asarray(tri, dtype=float)
    area2 = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    if area2 <= 0:
        raise ValueError("degenerate triangle")
    k = complex(kc) * np.asarray(d, dtype=complex)
    tris = tri[None]
    prev = None
    for level in range(max_levels + 1):
        if level:
            tris = _refine(tris)
        pts = np.einsum("qa,tad->tqd", _RADON_BARY, tris)
        f = np.exp(1j * (pts @ k))
        wts = _RADON_W * area2 / 4.0 ** level
        val = complex(np.sum(f @ wts))
        scale = float(np.sum(np.abs(f) @ wts))
        if prev is not None and level >= min_levels and abs(val - prev) <= rtol * scale:
            return val
        prev = val
    raise OracleConvergenceError(f"oracle did not converge within {max_levels} refinement levels")


def _refine(tris: np.ndarray) -> np.ndarray:
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.concatenate([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([bc, ca, ab], axis=1),
    ])
