"""Plane-wave Trefftz bases: direction sets, polarizations, traces."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "van_der_corput",
    "hammersley_sphere",
    "polarization_pair",
    "DirectionSet",
    "LocalBasis",
    "medium_root",
    "eval_plane_wave",
    "trace_values",
    "impedance_trace",
]


def van_der_corput(j: int) -> float:
    """Base-2 radical inverse of ``j``."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    value, scale = 0.0, 0.5
    while j:
        if j & 1:
            value += scale
        j >>= 1
        scale *= 0.5
    return value


def hammersley_sphere(n: int) -> np.ndarray:
    """``n`` Hammersley directions on the unit sphere, shape ``(n, 3)``.

    Point ``j`` uses ``u = (j + 0.5)/n`` and ``v = van_der_corput(j)``,
    mapped by ``z = 1 - 2u`` and ``phi = 2*pi*v``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    j = np.arange(n)
    u = (j + 0.5) / n
    v = np.array([van_der_corput(int(i)) for i in j])
    z = 1.0 - 2.0 * u
    r = np.sqrt(1.0 - z * z)
    phi = 2.0 * np.pi * v
    d = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def polarization_pair(d) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal polarizations ``(p1, p2)`` perpendicular to ``d``.

    ``p1 = normalize(a x d)`` with ``a`` the coordinate axis least aligned
    with ``d`` (first axis wins ties), and ``p2 = d x p1``.
    """
    d = np.asarray(d, dtype=float)
    axis = int(np.argmin(np.abs(d)))
    a = np.zeros(3)
    a[axis] = 1.0
    p1 = np.cross(a, d)
    p1 /= np.linalg.norm(p1)
    p2 = np.cross(d, p1)
    return p1, p2


@dataclass(frozen=True)
class DirectionSet:
    """``p`` unit directions with two orthonormal polarizations each."""

    directions: np.ndarray
    pol1: np.ndarray
    pol2: np.ndarray

    def __len__(self) -> int:
        return len(self.directions)

    @classmethod
    def from_directions(cls, directions) -> "DirectionSet":
        d = np.array(directions, dtype=float).reshape(-1, 3)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pairs = [polarization_pair(x) for x in d]
        p1 = np.array([p[0] for p in pairs]).reshape(-1, 3)
        p2 = np.array([p[1] for p in pairs]).reshape(-1, 3)
        for arr in (d, p1, p2):
            arr.setflags(write=False)
        return cls(d, p1, p2)

    @classmethod
    def hammersley(cls, p: int) -> "DirectionSet":
        return _hammersley_set(int(p))

    def basis_directions(self) -> np.ndarray:
        """Direction of each basis function, ordered direction-major."""
        return np.repeat(self.directions, 2, axis=0)

    def basis_polarizations(self) -> np.ndarray:
        out = np.empty((2 * len(self), 3))
        out[0::2] = self.pol1
        out[1::2] = self.pol2
        return out


@lru_cache(maxsize=None)
def _hammersley_set(p: int) -> DirectionSet:
    return DirectionSet.from_directions(hammersley_sphere(p))


def medium_root(eps_r: complex, conjugate_medium: bool) -> complex:
    """Principal square root of ``eps_r`` (or of its conjugate)."""
    eps = complex(eps_r)
    return complex(np.sqrt(eps.conjugate() if conjugate_medium else eps))


def eval_plane_wave(d, p, kappa: float, eps_r: complex, x, conjugate_medium: bool = False):
    """Field and curl of ``p * exp(1j*kappa*s*d.x)``.

    ``s`` is ``sqrt(conj(eps_r))`` for the adjoint (test) medium and
    ``sqrt(eps_r)`` otherwise. ``x`` may be one point or an ``(n, 3)``
    array; outputs follow its leading shape.
    """
    d = np.asarray(d, dtype=float)
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    s = medium_root(eps_r, conjugate_medium)
    phase = np.exp(1j * kappa * s * (x @ d))[..., None]
    E = p * phase
    curl = 1j * kappa * s * np.cross(d, p) * phase
    return E, curl


def trace_values(E, curlE, normal, kappa: float, lam: float, sign: int):
    """``nu x curlE + sign*1j*kappa*lam*E_T`` on arrays with trailing axis 3.

    ``normal`` broadcasts against ``E``; ``E_T = nu x (E x nu) = E - (E.nu) nu``.
    """
    nu = np.asarray(normal, dtype=float)
    E_T = E - np.sum(E * nu, axis=-1, keepdims=True) * nu
    return np.cross(nu, curlE) + sign * 1j * kappa * lam * E_T


def impedance_trace(field, normal, lam: float, kappa: float, sign: int):
    """Pointwise evaluator of the impedance trace of ``field`` on a face.

    ``field(x)`` returns ``(E, curlE)``; ``sign`` is ``+1`` for the outgoing
    combination and ``-1`` for the incoming one.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    nu = np.asarray(normal, dtype=float)

    def trace(x):
        E, curl = field(x)
        return trace_values(E, curl, nu, kappa, lam, sign)

    return trace


@dataclass(frozen=True)
class LocalBasis:
    """Adjoint-medium plane waves ``p_{j,l} exp(1j*kappa*sqrt(conj eps) d_j.x)`` on one element.

    Basis index ``2*j + l`` (direction-major, polarization-minor).
    """

    element: int
    directions: DirectionSet
    kappa: float
    eps_r: complex
    lam: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("impedance weight lambda must be positive")

    @property
    def size(self) -> int:
        return 2 * len(self.directions)

    @property
    def root(self) -> complex:
        return medium_root(self.eps_r, conjugate_medium=True)

    def wave_vectors(self) -> np.ndarray:
        """Complex wave vectors ``k_n`` with ``xi_n = p_n exp(1j k_n.x)``."""
        return self.kappa * self.root * self.directions.basis_directions()

    def amplitudes(self):
        """Constant factors ``(p_n, 1j*kappa*s*(d_n x p_n))`` of field and curl."""
        d = self.directions.basis_directions()
        p = self.directions.basis_polarizations()
        return p.astype(complex), 1j * self.kappa * self.root * np.cross(d, p)

    def evaluate(self, x):
        """Fields ``(E, curlE)`` of all basis functions at points ``x``.

        Shapes ``(nq, size, 3)`` for ``x`` of shape ``(nq, 3)``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phase = np.exp(1j * (x @ self.wave_vectors().T))[..., None]
        p, c = self.amplitudes()
        return p[None] * phase, c[None] * phase

    def traces(self, x, normal, sign: int, lam: float | None = None):
        E, curl = self.evaluate(x)
        return trace_values(E, curl, normal, self.kappa, self.lam if lam is None else lam, sign)
