"""Triangle mesh container, file I/O and per-face measurements."""

import os
from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Raised for malformed, unsupported or topologically invalid meshes."""


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with zero-based face indices.

    Arrays are copied and made read-only on construction.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        f = np.array(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError("faces must have shape (m, 3)")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])):
            raise MeshError("face repeats a vertex")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        e = np.sort(directed_edges(self.faces), axis=1)
        return np.unique(e, axis=0)

    def diameter(self):
        """Bounding-box diagonal length."""
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))


@dataclass(frozen=True)
class TopologyReport:
    n_vertices: int
    n_edges: int
    n_faces: int
    euler_characteristic: int
    boundary_edges: int
    nonmanifold_edges: int
    oriented: bool
    genus: int | None

    @property
    def closed(self):
        return self.boundary_edges == 0 and self.nonmanifold_edges == 0

    @property
    def is_sphere(self):
        return self.closed and self.oriented and self.genus == 0

    def describe(self):
        if not self.closed:
            return f"open or non-manifold surface ({self.boundary_edges} boundary edges)"
        if not self.oriented:
            return "inconsistently oriented faces"
        return f"genus {self.genus}"


def directed_edges(faces):
    f = np.asarray(faces)
    return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])


def validate_topology(mesh):
    """Count V, E, F, boundary edges and check orientation consistency."""
    de = directed_edges(mesh.faces)
    und = np.sort(de, axis=1)
    uniq, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    boundary = int(np.sum(counts == 1))
    nonmanifold = int(np.sum(counts > 2))

    # each directed edge may occur at most once in a consistently oriented mesh
    _, dcounts = np.unique(de, axis=0, return_counts=True)
    oriented = bool(np.all(dcounts == 1))

    V, E, F = mesh.n_vertices, len(uniq), mesh.n_faces
    chi = V - E + F
    genus = None
    if boundary == 0 and nonmanifold == 0 and chi % 2 == 0 and chi <= 2:
        genus = (2 - chi) // 2
    return TopologyReport(V, E, F, chi, boundary, nonmanifold, oriented, genus)


def require_sphere_topology(mesh):
    report = validate_topology(mesh)
    if not report.is_sphere:
        raise MeshError(f"expected a genus-0 closed oriented mesh, got {report.describe()}")
    return report


# ---------------------------------------------------------------------------
# per-face geometry

def face_edge_vectors(points, faces):
    p = np.asarray(points)
    f = np.asarray(faces)
    # edge i is opposite vertex i
    e0 = p[f[:, 2]] - p[f[:, 1]]
    e1 = p[f[:, 0]] - p[f[:, 2]]
    e2 = p[f[:, 1]] - p[f[:, 0]]
    return e0, e1, e2


def face_areas(points, faces):
    """Unsigned triangle areas for 3D (or 2D padded) vertex arrays."""
    p = np.asarray(points, dtype=float)
    f = np.asarray(faces)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    n = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    return 0.5 * np.linalg.norm(n, axis=1)


def face_normals(points, faces):
    """Unnormalized face normals (length = 2 * area)."""
    p = np.asarray(points, dtype=float)
    f = np.asarray(faces)
    return np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])


def signed_volume(points, faces):
    """Enclosed volume; positive when faces are oriented outward."""
    p = np.asarray(points, dtype=float)
    f = np.asarray(faces)
    return float(np.einsum("ij,ij->i", p[f[:, 0]], np.cross(p[f[:, 1]], p[f[:, 2]])).sum() / 6.0)


def face_regularities(points, faces):
    """Vectorised 4*sqrt(3)*area / (l1^2 + l2^2 + l3^2) for every face."""
    e0, e1, e2 = face_edge_vectors(points, faces)
    sq = (e0 ** 2).sum(1) + (e1 ** 2).sum(1) + (e2 ** 2).sum(1)
    area = face_areas(points, faces)
    out = np.zeros(len(area))
    ok = sq > 0
    out[ok] = 4.0 * np.sqrt(3.0) * area[ok] / sq[ok]
    return out


def face_regularity(mesh, face):
    """Regularity score in [0, 1]; 1 exactly for equilateral triangles, 0 if degenerate."""
    return float(face_regularities(mesh.vertices, mesh.faces[[face]])[0])


@dataclass(frozen=True)
class FaceGeometry:
    area: float
    lengths: tuple
    angles: tuple
    degenerate: bool


def face_geometry(mesh, face, tol=1e-14):
    """Area, edge lengths and interior angles of one face.

    ``lengths[i]`` and ``angles[i]`` refer to the edge opposite and the
    corner at local vertex ``i``.
    """
    p = mesh.vertices[mesh.faces[face]]
    lengths = tuple(float(np.linalg.norm(p[(i + 2) % 3] - p[(i + 1) % 3])) for i in range(3))
    area = float(0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0])))
    scale = max(lengths) ** 2
    degenerate = scale == 0 or area <= tol * scale
    angles = []
    for i in range(3):
        u = p[(i + 1) % 3] - p[i]
        w = p[(i + 2) % 3] - p[i]
        # atan2 stays accurate for angles near 0 and pi
        angles.append(float(np.arctan2(np.linalg.norm(np.cross(u, w)), np.dot(u, w))))
    return FaceGeometry(area, lengths, tuple(angles), degenerate)


def cotangent_weights(points, faces):
    """Per-face cotangents of the three corner angles, shape (m, 3)."""
    p = np.asarray(points, dtype=float)
    f = np.asarray(faces)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    cots = np.empty((len(f), 3))
    for i in range(3):
        u = p[f[:, (i + 1) % 3]] - p[f[:, i]]
        w = p[f[:, (i + 2) % 3]] - p[f[:, i]]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        cots[:, i] = (u * w).sum(1) / cross
    return cots


# ---------------------------------------------------------------------------
# file I/O

_FORMATS = ("obj", "off", "ply")


def _resolve_format(path, fmt):
    if fmt is None:
        fmt = os.path.splitext(str(path))[1].lstrip(".").lower()
    fmt = fmt.lower()
    if fmt not in _FORMATS:
        raise MeshError(f"unsupported mesh format {fmt!r}")
    return fmt


def _triangles(polys, one_based=False):
    faces = []
    for poly in polys:
        if len(poly) != 3:
            raise MeshError(f"non-triangular face with {len(poly)} vertices")
        faces.append([i - 1 for i in poly] if one_based else list(poly))
    return faces


def _read_obj(fh):
    verts, polys = [], []
    for lineno, line in enumerate(fh, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                polys.append([i if i > 0 else len(verts) + 1 + i for i in idx])
        except ValueError as exc:
            raise MeshError(f"malformed OBJ line {lineno}: {line.strip()!r}") from exc
    return verts, _triangles(polys, one_based=True)


def _tokens(fh):
    for line in fh:
        line = line.split("#", 1)[0]
        yield from line.split()


def _read_off(fh):
    tok = _tokens(fh)
    try:
        head = next(tok)
        if head.upper() != "OFF":
            raise MeshError("missing OFF header")
        nv, nf, _ = int(next(tok)), int(next(tok)), int(next(tok))
        verts = [[float(next(tok)) for _ in range(3)] for _ in range(nv)]
        polys = []
        for _ in range(nf):
            k = int(next(tok))
            polys.append([int(next(tok)) for _ in range(k)])
    except (StopIteration, ValueError) as exc:
        raise MeshError("malformed OFF file") from exc
    return verts, _triangles(polys)


def _read_ply(fh):
    if fh.readline().strip() != "ply":
        raise MeshError("missing PLY magic")
    nv = nf = None
    element = None
    vprops = []
    for line in fh:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format" and parts[1] != "ascii":
            raise MeshError("only ASCII PLY is supported")
        if parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                nv = int(parts[2])
            elif element == "face":
                nf = int(parts[2])
        elif parts[0] == "property" and element == "vertex":
            vprops.append(parts[-1])
        elif parts[0] == "end_header":
            break
    if nv is None or nf is None:
        raise MeshError("PLY header lacks vertex or face element")
    try:
        ix = [vprops.index(c) for c in "xyz"]
        verts = []
        for _ in range(nv):
            vals = fh.readline().split()
            verts.append([float(vals[i]) for i in ix])
        polys = []
        for _ in range(nf):
            vals = [int(x) for x in fh.readline().split()]
            polys.append(vals[1:1 + vals[0]])
    except (ValueError, IndexError) as exc:
        raise MeshError("malformed PLY body") from exc
    return verts, _triangles(polys)


def load_mesh(path, fmt=None):
    """Read an OBJ, OFF or ASCII PLY triangle mesh."""
    fmt = _resolve_format(path, fmt)
    reader = {"obj": _read_obj, "off": _read_off, "ply": _read_ply}[fmt]
    with open(path, "r") as fh:
        verts, faces = reader(fh)
    if not verts or not faces:
        raise MeshError(f"{path}: no vertices or faces")
    return TriMesh(np.array(verts, dtype=float), np.array(faces, dtype=np.int64))


def _fmt(x):
    return repr(float(x))


def write_mesh(mesh, path, fmt=None):
    """Write vertices with round-trip precision (``repr`` floats).

    ``mesh`` may be a :class:`TriMesh` or anything with ``vertices`` and
    ``faces`` attributes (e.g. a parameterization result).
    """
    fmt = _resolve_format(path, fmt)
    v = np.asarray(mesh.vertices, dtype=float)
    f = np.asarray(mesh.faces, dtype=np.int64)
    lines = []
    if fmt == "obj":
        lines += [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in v]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in f]
    elif fmt == "off":
        lines.append("OFF")
        lines.append(f"{len(v)} {len(f)} 0")
        lines += [f"{_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in v]
        lines += [f"3 {a} {b} {c}" for a, b, c in f]
    else:
        lines += ["ply", "format ascii 1.0", f"element vertex {len(v)}",
                  "property double x", "property double y", "property double z",
                  f"element face {len(f)}", "property list uchar int vertex_indices",
                  "end_header"]
        lines += [f"{_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in v]
        lines += [f"3 {a} {b} {c}" for a, b, c in f]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
