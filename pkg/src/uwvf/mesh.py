"""Tetrahedral meshes with face adjacency for face-based Trefftz methods."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "MeshParseError",
    "MeshTopologyError",
    "Mesh",
    "ElementGeometry",
    "MaterialTable",
    "LOCAL_FACES",
    "load_mesh",
    "write_mesh",
    "generate_cube_mesh",
    "element_geometry",
    "single_tet_mesh",
    "two_tet_mesh",
]

# Local face i is opposite vertex i; triples are outward-ordered for a
# positively oriented tetrahedron.
LOCAL_FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))

_EVEN_PERMS = {(0, 1, 2), (1, 2, 0), (2, 0, 1)}


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class MeshTopologyError(MeshError):
    pass


def _orientation(tri, key) -> int:
    perm = tuple(key.index(v) for v in tri)
    return 1 if perm in _EVEN_PERMS else -1


@dataclass(frozen=True)
class ElementGeometry:
    volume: float
    centroid: np.ndarray
    areas: np.ndarray  # (4,)
    normals: np.ndarray  # (4, 3) outward unit normals of the local faces
    h_K: float
    h_F: np.ndarray  # (4,) longest edge of each local face


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tetrahedral mesh.

    ``faces`` are keyed by ascending vertex indices. ``face_elements[f]``
    holds the incident element ids (second entry ``-1`` on the boundary),
    ``face_local`` the matching local face index and ``face_sign`` the
    orientation of the element's outward triple relative to the key.
    ``boundary_tag`` is ``-1`` on interior faces.
    """

    vertices: np.ndarray
    tets: np.ndarray
    region_id: np.ndarray
    faces: np.ndarray
    face_elements: np.ndarray
    face_local: np.ndarray
    face_sign: np.ndarray
    boundary_tag: np.ndarray
    element_faces: np.ndarray
    _geometry: list = field(default_factory=list, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.tets)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elements[:, 1] >= 0)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elements[:, 1] < 0)

    @property
    def boundary_tags(self) -> list[int]:
        return sorted({int(t) for t in self.boundary_tag[self.boundary_faces]})

    @property
    def regions(self) -> list[int]:
        return sorted({int(r) for r in self.region_id})

    def neighbors(self, k: int) -> list[int]:
        out = []
        for f in self.element_faces[k]:
            a, b = self.face_elements[f]
            if b >= 0:
                out.append(int(b if a == k else a))
        return out

    def geometry(self, k: int) -> ElementGeometry:
        return self._geometry[k]

    def tet_vertices(self, k: int) -> np.ndarray:
        return self.vertices[self.tets[k]]

    def face_vertices(self, k: int, local: int) -> np.ndarray:
        """Vertex coordinates of local face ``local`` of element ``k``, outward-ordered."""
        return self.vertices[self.tets[k][list(LOCAL_FACES[local])]]

    def volumes(self) -> np.ndarray:
        return np.array([g.volume for g in self._geometry])

    def shape_regularity(self) -> float:
        """Largest ratio ``h_K / (2 * inradius)`` over the mesh (reported only)."""
        worst = 0.0
        for g in self._geometry:
            inradius = 3.0 * g.volume / g.areas.sum()
            worst = max(worst, g.h_K / (2.0 * inradius))
        return worst

    @classmethod
    def from_arrays(cls, vertices, tets, region_id=None, boundary=None, default_tag: int | None = None):
        """Build a mesh, deriving faces and adjacency.

        ``boundary`` is an iterable of ``(v0, v1, v2, tag)``; every boundary
        face must be listed unless ``default_tag`` is given, in which case
        unlisted boundary faces receive it.
        """
        vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        tets = np.array(tets, dtype=np.int64).reshape(-1, 4).copy()
        nt = len(tets)
        region_id = np.ones(nt, dtype=np.int64) if region_id is None else np.array(region_id, dtype=np.int64)
        if len(region_id) != nt:
            raise MeshError("region_id length does not match element count")
        if nt == 0:
            raise MeshError("mesh has no elements")
        if tets.min() < 0 or tets.max() >= len(vertices):
            raise MeshTopologyError("element references a vertex index out of range")

        _, first = np.unique(vertices, axis=0, return_index=True)
        if len(first) != len(vertices):
            dup = sorted(set(range(len(vertices))) - set(first.tolist()))
            raise MeshTopologyError(f"duplicate vertex coordinates at vertex {dup[0]}")

        for k in range(nt):
            if len(set(tets[k].tolist())) != 4:
                raise MeshTopologyError(f"element {k} repeats a vertex")
            p = vertices[tets[k]]
            det = np.linalg.det(p[1:] - p[0])
            scale = max(np.linalg.norm(p[i] - p[j]) for i, j in itertools.combinations(range(4), 2))
            if abs(det) <= 1e-12 * scale ** 3:
                raise MeshTopologyError(f"element {k} is degenerate (zero volume)")
            if det < 0:
                tets[k, [2, 3]] = tets[k, [3, 2]]

        incid: dict[tuple, list] = defaultdict(list)
        for k in range(nt):
            for i, loc in enumerate(LOCAL_FACES):
                tri = tuple(int(v) for v in tets[k][list(loc)])
                key = tuple(sorted(tri))
                incid[key].append((k, i, _orientation(tri, key)))

        keys = sorted(incid)
        nf = len(keys)
        faces = np.array(keys, dtype=np.int64)
        face_elements = -np.ones((nf, 2), dtype=np.int64)
        face_local = -np.ones((nf, 2), dtype=np.int64)
        face_sign = np.zeros((nf, 2), dtype=np.int64)
        element_faces = np.zeros((nt, 4), dtype=np.int64)
        index = {}
        for f, key in enumerate(keys):
            inc = incid[key]
            if len(inc) > 2:
                raise MeshTopologyError(f"face {key} has {len(inc)} incident elements")
            if len(inc) == 2 and inc[0][2] == inc[1][2]:
                raise MeshTopologyError(f"face {key} has inconsistent orientation in its two elements")
            index[key] = f
            for j, (k, i, s) in enumerate(inc):
                face_elements[f, j] = k
                face_local[f, j] = i
                face_sign[f, j] = s
                element_faces[k, i] = f

        boundary_tag = -np.ones(nf, dtype=np.int64)
        for entry in boundary or ():
            v0, v1, v2, tag = (int(x) for x in entry)
            key = tuple(sorted((v0, v1, v2)))
            f = index.get(key)
            if f is None:
                raise MeshTopologyError(f"boundary face {key} is not a face of any element")
            if face_elements[f, 1] >= 0:
                raise MeshTopologyError(f"boundary face {key} is interior (two incident elements)")
            if boundary_tag[f] >= 0:
                raise MeshTopologyError(f"boundary face {key} listed twice")
            boundary_tag[f] = tag
        for f in np.flatnonzero(face_elements[:, 1] < 0):
            if boundary_tag[f] < 0:
                if default_tag is None:
                    raise MeshTopologyError(f"boundary face {tuple(faces[f])} has no boundary tag")
                boundary_tag[f] = default_tag

        edge_count: dict[tuple, int] = defaultdict(int)
        for f in np.flatnonzero(face_elements[:, 1] < 0):
            a, b, c = faces[f]
            for e in ((a, b), (b, c), (a, c)):
                edge_count[e] += 1
        bad = [e for e, c in edge_count.items() if c != 2]
        if bad:
            raise MeshTopologyError(f"boundary is not closed at edge {bad[0]}")

        for arr in (vertices, tets, region_id, faces, face_elements, face_local, face_sign,
                    boundary_tag, element_faces):
            arr.setflags(write=False)
        mesh = cls(vertices, tets, region_id, faces, face_elements, face_local, face_sign,
                   boundary_tag, element_faces)
        mesh._geometry.extend(_compute_geometry(vertices, tets))
        return mesh


def _compute_geometry(vertices, tets):
    out = []
    for tet in tets:
        p = vertices[tet]
        vol = np.linalg.det(p[1:] - p[0]) / 6.0
        areas = np.empty(4)
        normals = np.empty((4, 3))
        h_F = np.empty(4)
        for i, loc in enumerate(LOCAL_FACES):
            a, b, c = p[list(loc)]
            n = np.cross(b - a, c - a)
            areas[i] = 0.5 * np.linalg.norm(n)
            normals[i] = n / np.linalg.norm(n)
            h_F[i] = max(np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c))
        h_K = max(np.linalg.norm(p[i] - p[j]) for i, j in itertools.combinations(range(4), 2))
        centroid = p.mean(axis=0)
        for arr in (areas, normals, h_F, centroid):
            arr.setflags(write=False)
        out.append(ElementGeometry(float(vol), centroid, areas, normals, float(h_K), h_F))
    return out


def element_geometry(mesh: Mesh, k: int) -> ElementGeometry:
    """Volume, face areas, outward unit normals and diameters of element ``k``."""
    if not 0 <= k < mesh.n_elements:
        raise IndexError(f"element index {k} out of range")
    return mesh.geometry(k)


@dataclass(frozen=True)
class MaterialTable:
    """Piecewise-constant relative permittivity keyed by region id."""

    eps_r: dict

    def __post_init__(self):
        for region, eps in self.eps_r.items():
            eps = complex(eps)
            if eps == 0:
                raise ValueError(f"region {region}: eps_r must be nonzero")
            if eps.imag < 0:
                raise ValueError(f"region {region}: Im(eps_r) must be >= 0")

    def __getitem__(self, region: int) -> complex:
        return complex(self.eps_r[region])

    @classmethod
    def uniform(cls, mesh: Mesh, eps_r: complex = 1.0) -> "MaterialTable":
        return cls({r: complex(eps_r) for r in mesh.regions})

    def for_element(self, mesh: Mesh, k: int) -> complex:
        return self[int(mesh.region_id[k])]

    def is_absorbing(self) -> bool:
        return any(complex(e).imag > 0 for e in self.eps_r.values())


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_mesh(text: str) -> Mesh:
    """Parse the ``tetmesh 1`` ASCII format."""
    lines = list(_tokens(text))
    if not lines:
        raise MeshParseError(1, "empty mesh file")

    def expect(pos, n, kind, conv):
        if pos >= len(lines):
            last = lines[-1][0] if lines else 1
            raise MeshParseError(last + 1, f"unexpected end of file, expected {kind}")
        lineno, tok = lines[pos]
        if len(tok) != n:
            raise MeshParseError(lineno, f"expected {n} fields for {kind}, got {len(tok)}")
        try:
            return [c(t) for c, t in zip(conv, tok)]
        except ValueError:
            raise MeshParseError(lineno, f"malformed {kind}: {' '.join(tok)}") from None

    lineno, head = lines[0]
    if head != ["tetmesh", "1"]:
        raise MeshParseError(lineno, "expected header 'tetmesh 1'")
    nv, nt, nb = expect(1, 3, "counts", (int,) * 3)
    if min(nv, nt, nb) < 0:
        raise MeshParseError(lines[1][0], "negative count")
    pos = 2
    verts = []
    for _ in range(nv):
        verts.append(expect(pos, 3, "vertex", (float,) * 3))
        pos += 1
    tets, regions = [], []
    for _ in range(nt):
        row = expect(pos, 5, "tetrahedron", (int,) * 5)
        if min(row[:4]) < 0 or max(row[:4]) >= nv:
            raise MeshParseError(lines[pos][0], "vertex index out of range")
        tets.append(row[:4])
        regions.append(row[4])
        pos += 1
    bnd = []
    for _ in range(nb):
        row = expect(pos, 4, "boundary face", (int,) * 4)
        if min(row[:3]) < 0 or max(row[:3]) >= nv:
            raise MeshParseError(lines[pos][0], "vertex index out of range")
        bnd.append(row)
        pos += 1
    if pos != len(lines):
        raise MeshParseError(lines[pos][0], "trailing data after boundary faces")
    return Mesh.from_arrays(verts, tets, regions, bnd)


def write_mesh(mesh: Mesh) -> str:
    out = ["tetmesh 1", f"{mesh.n_vertices} {mesh.n_elements} {len(mesh.boundary_faces)}"]
    out += [" ".join(f"{c:.17g}" for c in v) for v in mesh.vertices]
    out += [" ".join(str(int(x)) for x in t) + f" {int(r)}" for t, r in zip(mesh.tets, mesh.region_id)]
    for f in mesh.boundary_faces:
        out.append(" ".join(str(int(x)) for x in mesh.faces[f]) + f" {int(mesh.boundary_tag[f])}")
    return "\n".join(out) + "\n"


# Kuhn subdivision: one tet per axis permutation, walking from corner 0 to corner 7
_KUHN = [perm for perm in itertools.permutations(range(3))]


def generate_cube_mesh(n: int, region: int = 1) -> Mesh:
    """Unit cube split into ``n**3`` subcubes of 6 Kuhn tetrahedra each.

    Boundary tags: 1/2 for x=0/x=1, 3/4 for y=0/y=1, 5/6 for z=0/z=1.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    g = np.arange(n + 1) / n
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    tets = []
    for i, j, k in itertools.product(range(n), repeat=3):
        for perm in _KUHN:
            corner = [0, 0, 0]
            path = [vid(i, j, k)]
            for axis in perm:
                corner[axis] += 1
                path.append(vid(i + corner[0], j + corner[1], k + corner[2]))
            tets.append(path)

    mesh = Mesh.from_arrays(verts, tets, [region] * len(tets), default_tag=0)
    bnd = []
    for f in mesh.boundary_faces:
        p = verts[mesh.faces[f]]
        for axis in range(3):
            if np.all(p[:, axis] == 0.0):
                bnd.append((*mesh.faces[f], 2 * axis + 1))
            elif np.all(p[:, axis] == 1.0):
                bnd.append((*mesh.faces[f], 2 * axis + 2))
    return Mesh.from_arrays(verts, tets, [region] * len(tets), bnd)


def single_tet_mesh(vertices=None, tag: int = 1, region: int = 1) -> Mesh:
    """One tetrahedron, default the unit right tetrahedron."""
    if vertices is None:
        vertices = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    return Mesh.from_arrays(vertices, [(0, 1, 2, 3)], [region], default_tag=tag)


def two_tet_mesh(tag: int = 1, region: int = 1) -> Mesh:
    """Two tetrahedra sharing the face (1, 2, 3)."""
    verts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)]
    return Mesh.from_arrays(verts, [(0, 1, 2, 3), (1, 2, 3, 4)], [region, region], default_tag=tag)
