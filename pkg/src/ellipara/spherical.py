"""Spherical conformal initialization computed entirely in the plane.

The most regular face is removed and pinned to a similar outer triangle,
the remaining disk is flattened harmonically, and the distortion left near
the outer triangle is corrected in the inverted chart with one linear
Beltrami solve.  Planar coordinates use the north stereographic chart, so
the unit-sphere positions are ``inv_stereographic(z)``.

Planar triangles are stored counter-clockwise: for an outward-oriented
mesh the north projection reverses orientation, so the faces are traversed
in reverse (see :func:`plane_faces`).
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .beltrami import local_frames, mu_surface_map, truncate_mu
from .lbs import ConstraintSet, LBSError, cotangent_laplacian, solve_lbs, solve_system
from .mesh import face_areas, face_regularities, require_sphere_topology, signed_volume
from .projections import INF, balance_factor, is_inf, pole_swap

log = logging.getLogger(__name__)

#: faces below this regularity never become the polar face
MIN_REGULARITY = 1e-6


@dataclass
class PlanarEmbedding:
    """Vertex positions in the extended plane with counter-clockwise faces.

    ``outer_face`` is the face whose triangle bounds the exterior region (it
    is not part of the planar triangulation); ``inf_vertex`` is a vertex
    placed at infinity.  Either may be ``None``.
    """

    z: np.ndarray
    faces: np.ndarray
    outer_face: int | None = None
    inf_vertex: int | None = None

    def active_faces(self):
        """Boolean mask of faces that are bounded planar triangles."""
        keep = np.ones(len(self.faces), dtype=bool)
        if self.outer_face is not None:
            keep[self.outer_face] = False
        if self.inf_vertex is not None:
            keep &= ~np.any(self.faces == self.inf_vertex, axis=1)
        return keep

    def scaled(self, k):
        inf = is_inf(self.z)
        z = self.z.copy()
        z[~inf] *= k
        return replace(self, z=z)


@dataclass
class SphericalInit:
    planar: PlanarEmbedding
    north_face: int
    south_face: int

    def sphere_positions(self):
        from .projections import inv_stereographic
        return inv_stereographic(self.planar.z)


def plane_faces(mesh):
    """Faces ordered so that north stereographic images are counter-clockwise."""
    f = np.asarray(mesh.faces)
    if signed_volume(mesh.vertices, f) > 0:
        return f[:, [0, 2, 1]]
    return f.copy()


def select_polar_face(mesh, tol=1e-12):
    """Index of the most regular face; near-ties go to the smallest index."""
    reg = face_regularities(mesh.vertices, mesh.faces)
    reg = np.where(reg < MIN_REGULARITY, -1.0, reg)
    best = reg.max()
    if best < 0:
        raise ValueError("every face is degenerate")
    return int(np.flatnonzero(reg >= best - tol)[0])


def face_containing(z, faces, point, candidates=None):
    """Face whose triangle contains ``point``, preferring the most interior one."""
    f = np.asarray(faces)
    idx = np.arange(len(f)) if candidates is None else np.flatnonzero(candidates)
    tri = np.asarray(z)[f[idx]]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    cross = lambda u, w: (np.conj(u) * w).imag  # noqa: E731
    area = cross(b - a, c - a)
    with np.errstate(divide="ignore", invalid="ignore"):
        l0 = cross(b - point, c - point) / area
        l1 = cross(c - point, a - point) / area
    l2 = 1 - l0 - l1
    score = np.minimum(np.minimum(l0, l1), l2)
    score = np.where(np.isfinite(score), score, -np.inf)
    j = int(np.argmax(score))
    if score[j] < -1e-12:
        raise ValueError("point lies outside the planar triangulation")
    return int(idx[j])


def harmonic_flatten(mesh, deleted, faces=None):
    """Harmonic map of the mesh minus face ``deleted`` onto the plane.

    The deleted face's vertices are pinned to a triangle similar to the
    face's 3D shape, with unit circumscribed size and its centroid at the
    origin; every other vertex satisfies the cotangent-Laplacian condition.
    """
    f = plane_faces(mesh) if faces is None else np.asarray(faces)
    keep = np.ones(len(f), dtype=bool)
    keep[deleted] = False
    L = cotangent_laplacian(mesh.vertices, f[keep], n=mesh.n_vertices)
    tri = local_frames(mesh.vertices, f[[deleted]])[0]
    # the disk boundary runs opposite to the deleted face, so pin it clockwise
    tri = np.conj(tri - tri.mean())
    tri = tri / np.abs(tri).max()
    try:
        z = solve_system(L, ConstraintSet.pins(f[deleted], tri))
    except LBSError as exc:
        raise LBSError(f"harmonic flattening: {exc}") from exc
    return PlanarEmbedding(z, f, outer_face=int(deleted))


def harmonic_residual(mesh, planar):
    """Max interior Laplacian residual relative to the Laplacian scale."""
    keep = planar.active_faces()
    L = cotangent_laplacian(mesh.vertices, planar.faces[keep], n=len(planar.z))
    r = L @ planar.z
    interior = np.ones(len(planar.z), dtype=bool)
    if planar.outer_face is not None:
        interior[planar.faces[planar.outer_face]] = False
    scale = abs(L).max() * np.abs(planar.z[np.isfinite(planar.z)]).max()
    return float(np.abs(r[interior]).max() / scale) if interior.any() else 0.0


def invert_to_south(planar, diameter=1.0, south_face=None):
    """Apply the pole swap z / |z|^2 vertex-wise.

    A vertex exactly at the origin is first moved by ``1e-12 * diameter``.
    The returned embedding is clockwise; its exterior face is ``south_face``.
    """
    z = np.array(planar.z, dtype=complex)
    zero = z == 0
    if np.any(zero):
        log.warning("vertex at the origin perturbed before inversion")
        z[zero] = 1e-12 * diameter
    return PlanarEmbedding(pole_swap(z), planar.faces, outer_face=south_face)


def south_correction(mesh, inverted, fraction=0.5):
    """Make the map conformal near the inverted outer triangle.

    Vertices of ``inverted`` with |z| above the ``fraction`` quantile and
    the vertices of its exterior face are pinned; the rest are re-solved
    with the linear Beltrami solver so that the composite mesh -> plane map
    has zero Beltrami coefficient.  The
    work happens in the conjugate chart 1/z, which keeps faces
    counter-clockwise.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    u = np.conj(inverted.z)
    r = np.abs(u)
    pinned = r > np.quantile(r, fraction)
    if inverted.outer_face is not None:
        # the exterior face bounds the inverted chart and always stays fixed
        pinned[inverted.faces[inverted.outer_face]] = True
    active = inverted.active_faces()
    touch = active & ~np.all(pinned[inverted.faces], axis=1)
    if not np.any(touch):
        return replace(inverted)
    f = inverted.faces[touch]
    mu = mu_surface_map(u, mesh.vertices, f).mu
    if np.any(~np.isfinite(mu) | (np.abs(mu) >= 0.999)):
        log.warning("south correction: clamping %d inadmissible coefficients",
                    int(np.sum(~np.isfinite(mu) | (np.abs(mu) >= 0.999))))
        mu = truncate_mu(mu, 0.999).mu
    idx = np.flatnonzero(pinned)
    out = solve_lbs(u, f, mu, ConstraintSet.pins(idx, u[idx]))
    return replace(inverted, z=np.conj(out))


def _balance(planar, north_face, south_face):
    f = planar.faces
    return balance_factor(planar.z[f[north_face]], planar.z[f[south_face]])


def vertex_areas(mesh):
    """One third of the incident face areas at every vertex."""
    a = face_areas(mesh.vertices, mesh.faces) / 3
    return np.bincount(mesh.faces.ravel(), weights=np.repeat(a, 3), minlength=mesh.n_vertices)


def height_balance(z, weights):
    """Scale k that puts the weighted mean height of inv_stereographic(k z) at zero.

    The height of every lifted point grows monotonically with k, so the
    root is unique; it is bracketed in log k and found with Brent's method.
    """
    z = np.asarray(z, dtype=complex)
    r2 = np.abs(z) ** 2
    w = np.asarray(weights, dtype=float) / np.sum(weights)

    def mean_height(t):
        s = np.exp(2 * t) * r2
        return float(np.sum(w * (s - 1) / (s + 1)))

    lo, hi = -1.0, 1.0
    while mean_height(lo) > 0:
        lo *= 2
    while mean_height(hi) < 0:
        hi *= 2
    return float(np.exp(brentq(mean_height, lo, hi, xtol=1e-14)))


def spherical_param(mesh, fraction=0.5):
    """Planar conformal parameterization of a genus-0 mesh in the north chart."""
    require_sphere_topology(mesh)
    f = plane_faces(mesh)
    north = select_polar_face(mesh)
    planar = harmonic_flatten(mesh, north, faces=f)

    # centre the face containing the vertex mean on the origin
    south = face_containing(planar.z, f, planar.z.mean(), planar.active_faces())
    planar.z = planar.z - planar.z[f[south]].mean()
    planar = planar.scaled(_balance(planar, north, south))

    inv = invert_to_south(planar, mesh.diameter(), south_face=south)
    inv = south_correction(mesh, inv, fraction)
    z = pole_swap(inv.z)
    planar = PlanarEmbedding(z, f, outer_face=north)
    planar = planar.scaled(height_balance(z, vertex_areas(mesh)))
    return SphericalInit(planar, north, south)
