"""Per-face Beltrami coefficients of piecewise-linear maps."""

from dataclasses import dataclass

import numpy as np

from .projections import ellipsoid_normals


class CompositionError(ArithmeticError):
    pass


@dataclass
class BeltramiField:
    """Per-face Beltrami coefficient.

    ``fz`` holds the per-face complex derivative f_z when the field was
    measured from a planar map; it is needed by :func:`compose_mu`.
    """

    mu: np.ndarray
    fz: np.ndarray | None = None

    @property
    def admissible(self):
        return np.isfinite(self.mu) & (np.abs(self.mu) < 1)

    @property
    def abs(self):
        return np.abs(self.mu)

    def __len__(self):
        return len(self.mu)


def signed_areas(z, faces):
    """Signed areas of planar triangles given complex vertex positions."""
    z = np.asarray(z)
    f = np.asarray(faces)
    a, b, c = z[f[:, 0]], z[f[:, 1]], z[f[:, 2]]
    return 0.5 * (np.conj(b - a) * (c - a)).imag


def hat_gradients(z, faces):
    """Complex gradients d/dx + i d/dy of the three barycentric hat functions.

    Returns ``(g, area)`` where ``g`` has shape (m, 3) and ``area`` is the
    signed face area.  The formula ``i * e_k / (2 * area)`` with ``e_k`` the
    edge opposite corner ``k`` holds for either orientation.
    """
    z = np.asarray(z)
    f = np.asarray(faces)
    p0, p1, p2 = z[f[:, 0]], z[f[:, 1]], z[f[:, 2]]
    area = 0.5 * (np.conj(p1 - p0) * (p2 - p0)).imag
    e = np.column_stack([p2 - p1, p0 - p2, p1 - p0])
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 1j * e / (2 * area[:, None])
    return g, area


def pl_derivatives(domain, image, faces, tol=0.0):
    """Per-face (f_z, f_zbar) of the PL map sending ``domain`` to ``image``."""
    g, area = hat_gradients(domain, faces)
    bad = (np.abs(area) <= tol * np.abs(g).max(1) ** -2) | ~np.all(np.isfinite(g), axis=1)
    if np.any(bad):
        raise ValueError(f"degenerate domain face {int(np.flatnonzero(bad)[0])}")
    w = np.asarray(image)[np.asarray(faces)]
    fzbar = 0.5 * (w * g).sum(1)
    fz = 0.5 * (w * np.conj(g)).sum(1)
    return fz, fzbar


def mu_planar_faces(domain, image, faces):
    """Beltrami coefficient B/A of each affine piece f(z) = Az + B conj(z) + C.

    Orientation-reversing faces give |mu| > 1 (inf when A = 0); they are
    reported as inadmissible rather than rejected.
    """
    fz, fzbar = pl_derivatives(domain, image, faces)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = fzbar / fz
    mu = np.where(fz == 0, np.where(fzbar == 0, 0.0, np.inf), mu)
    return BeltramiField(mu.astype(complex), fz)


def local_frames(points, faces):
    """Flatten every 3D triangle isometrically into its own orthonormal frame.

    The frame is canonical: origin at the first corner, x-axis along the
    first edge, y-axis completing a right-handed frame with the face
    normal.  Returns complex (m, 3) coordinates.
    """
    p = np.asarray(points, dtype=float)
    f = np.asarray(faces)
    p0, p1, p2 = p[f[:, 0]], p[f[:, 1]], p[f[:, 2]]
    u = p1 - p0
    w = p2 - p0
    lu = np.linalg.norm(u, axis=1)
    n = np.cross(u, w)
    ln = np.linalg.norm(n, axis=1)
    bad = (lu == 0) | (ln == 0)
    if np.any(bad):
        raise ValueError(f"degenerate face {int(np.flatnonzero(bad)[0])}")
    ex = u / lu[:, None]
    ey = np.cross(n / ln[:, None], ex)
    out = np.zeros((len(f), 3), dtype=complex)
    out[:, 1] = lu
    out[:, 2] = (w * ex).sum(1) + 1j * (w * ey).sum(1)
    return out


def _per_face_coords(x, faces):
    x = np.asarray(x)
    if np.iscomplexobj(x) or x.ndim == 1:
        return np.asarray(x, dtype=complex)[np.asarray(faces)]
    if x.shape[1] == 2:
        return (x[:, 0] + 1j * x[:, 1])[np.asarray(faces)]
    return local_frames(x, faces)


def mu_surface_map(domain, image, faces=None):
    """Beltrami coefficient of the PL map between two triangulations with shared faces.

    Either side may be planar (complex array) or a 3D vertex array / TriMesh.
    3D triangles are flattened into their canonical frames, so the result is
    invariant under rigid motions of either side.
    """
    if faces is None:
        faces = getattr(domain, "faces", None)
        if faces is None:
            faces = image.faces
    dom = getattr(domain, "vertices", domain)
    img = getattr(image, "vertices", image)
    faces = np.asarray(faces)
    zd = _per_face_coords(dom, faces)
    zi = _per_face_coords(img, faces)
    local = np.tile(np.arange(3), (len(faces), 1)) + 3 * np.arange(len(faces))[:, None]
    return mu_planar_faces(zd.ravel(), zi.ravel(), local)


def compose_mu(mu_f, fz, mu_g_of_f, tol=1e-12):
    """Beltrami coefficient of g o f from mu_f, f_z and mu_g evaluated on f's faces."""
    mu_f = np.asarray(getattr(mu_f, "mu", mu_f), dtype=complex)
    mu_g = np.asarray(getattr(mu_g_of_f, "mu", mu_g_of_f), dtype=complex)
    fz = np.asarray(fz, dtype=complex)
    phase = np.conj(fz) / fz
    den = 1 + phase * np.conj(mu_f) * mu_g
    if np.any(np.abs(den) < tol):
        raise CompositionError("composition blow-up: denominator vanishes")
    return BeltramiField((mu_f + phase * mu_g) / den)


def dilatation(mu):
    """K = (1 + |mu|) / (1 - |mu|)."""
    m = np.abs(np.asarray(getattr(mu, "mu", mu)))
    if np.any(m >= 1):
        raise ValueError("dilatation undefined for |mu| >= 1")
    return (1 + m) / (1 - m)


def jacobian_sign(domain, image, faces):
    """Sign of the PL Jacobian determinant per face (+1, 0 or -1)."""
    return np.sign(signed_areas(image, faces)) * np.sign(signed_areas(domain, faces))


def truncate_mu(field, bound):
    """Clamp |mu| to ``bound`` keeping the phase; undefined phases become 0."""
    if not 0 < bound < 1:
        raise ValueError("bound must lie in (0, 1)")
    mu = np.array(getattr(field, "mu", field), dtype=complex)
    finite = np.isfinite(mu)
    mag = np.abs(mu)
    out = np.zeros_like(mu)
    out[finite] = mu[finite]
    over = finite & (mag > bound)
    out[over] = mu[over] / mag[over] * bound
    return BeltramiField(out)


def count_foldovers(faces, positions, radii):
    """Faces whose image normal points into the ellipsoid."""
    p = np.asarray(positions, dtype=float)
    f = np.asarray(getattr(faces, "faces", faces))
    n = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    outward = ellipsoid_normals(p[f].mean(1), radii)
    return int(np.sum((n * outward).sum(1) < 0))
