"""Synthetic closed meshes used by the tests, the acceptance suite and demos."""

import numpy as np

from .mesh import TriMesh


def _orient_outward(v, f):
    c = v[f].mean(1)
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    flip = (n * c).sum(1) < 0
    f = f.copy()
    f[flip] = f[flip][:, [0, 2, 1]]
    return f


def tetrahedron():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(v, _orient_outward(v, f))


def icosahedron():
    """Unit icosahedron with vertices at both poles (0, 0, +-1)."""
    z = 1 / np.sqrt(5)
    r = 2 / np.sqrt(5)
    k = np.arange(5)
    upper = np.column_stack([r * np.cos(2 * np.pi * k / 5), r * np.sin(2 * np.pi * k / 5), np.full(5, z)])
    lower = np.column_stack([r * np.cos(2 * np.pi * k / 5 + np.pi / 5),
                             r * np.sin(2 * np.pi * k / 5 + np.pi / 5), np.full(5, -z)])
    v = np.vstack([[0, 0, 1], upper, lower, [0, 0, -1]])
    f = []
    for i in range(5):
        j = (i + 1) % 5
        f.append([0, 1 + i, 1 + j])
        f.append([1 + i, 6 + i, 1 + j])
        f.append([1 + j, 6 + i, 6 + j])
        f.append([11, 6 + j, 6 + i])
    f = np.array(f)
    return TriMesh(v, _orient_outward(v, f))


def geodesic_sphere(frequency):
    """Icosahedron with every face split into ``frequency**2`` triangles, projected to the unit sphere.

    ``frequency = 2**k`` reproduces the k-times subdivided icosphere
    (20 * 4**k faces); ``frequency = 50`` gives exactly 50 000 faces.
    """
    n = int(frequency)
    if n < 1:
        raise ValueError("frequency must be >= 1")
    base = icosahedron()
    bv, bf = base.vertices, base.faces
    # local lattice of one face: (i, j) with i + j <= n
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = ii + jj <= n
    ii, jj = ii[keep], jj[keep]
    local = -np.ones((n + 1, n + 1), dtype=np.int64)
    local[ii, jj] = np.arange(len(ii))
    tris = []
    for i in range(n):
        for j in range(n - i):
            tris.append([local[i, j], local[i + 1, j], local[i, j + 1]])
            if i + j < n - 1:
                tris.append([local[i + 1, j], local[i + 1, j + 1], local[i, j + 1]])
    tris = np.array(tris)

    pts, faces = [], []
    for fi, (a, b, c) in enumerate(bf):
        A, B, C = bv[a], bv[b], bv[c]
        p = A + np.outer(ii / n, B - A) + np.outer(jj / n, C - A)
        pts.append(p)
        faces.append(tris + fi * len(ii))
    pts = np.vstack(pts)
    faces = np.vstack(faces)
    key = np.round(pts * 1e9).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    # keep vertex order deterministic: by first occurrence
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    v = pts[first[order]]
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = relabel[inverse[faces]]
    return TriMesh(v, _orient_outward(v, f))


def icosphere(subdivisions):
    return geodesic_sphere(2 ** int(subdivisions))


def ellipsoid(radii, frequency=32):
    """Geodesic sphere scaled to the axis-aligned ellipsoid with the given radii."""
    s = geodesic_sphere(frequency)
    return TriMesh(s.vertices * np.asarray(radii, dtype=float), s.faces)


def radial_blob(frequency=16, bumps=((2, 1, 0.15), (3, 2, 0.1)), scale=(1.0, 1.0, 1.0)):
    """Star-shaped blob r(theta, phi) = 1 + sum(amp * Y) built on a geodesic sphere.

    ``bumps`` holds (l, m, amplitude) triples of real harmonic-like
    modulations cos(m*phi) * P-ish(cos theta); amplitudes stay small enough
    that the surface remains star-shaped.
    """
    s = geodesic_sphere(frequency)
    v = s.vertices
    theta = np.arccos(np.clip(v[:, 2], -1, 1))
    phi = np.arctan2(v[:, 1], v[:, 0])
    r = np.ones(len(v))
    for l, m, amp in bumps:
        r += amp * np.cos(m * phi + 0.3 * l) * np.sin(theta) ** m * np.cos(l * theta)
    return TriMesh(v * r[:, None] * np.asarray(scale, dtype=float), s.faces)


def capsule(frequency=16, length=2.5, bluntness=0.3):
    """Elongated body of revolution with blunt ends.

    The profile radius is ``sin(theta) ** bluntness`` and the axial
    coordinate ``length * cos(theta)``, so the extent ratio is ``length``;
    small exponents give nearly flat ends.
    """
    s = geodesic_sphere(frequency)
    v = s.vertices
    rho = np.linalg.norm(v[:, :2], axis=1)
    theta = np.arccos(np.clip(v[:, 2], -1, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(rho > 0, np.sin(theta) ** bluntness / rho, 0.0)
    out = np.column_stack([v[:, 0] * scale, v[:, 1] * scale, length * np.cos(theta)])
    return TriMesh(out, s.faces)


def box(extent=(1.0, 1.0, 1.0), divisions=1):
    """Closed triangulated box surface centred at the origin."""
    n = int(divisions)
    ex = np.asarray(extent, dtype=float) / 2
    pts, faces = [], []
    offset = 0
    g = np.linspace(-1, 1, n + 1)
    for axis in range(3):
        for sign in (-1, 1):
            u, w = [a for a in range(3) if a != axis]
            U, W = np.meshgrid(g, g, indexing="ij")
            p = np.zeros((U.size, 3))
            p[:, axis] = sign
            p[:, u] = U.ravel()
            p[:, w] = W.ravel()
            idx = np.arange(U.size).reshape(n + 1, n + 1)
            for i in range(n):
                for j in range(n):
                    a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
                    faces += [[a + offset, b + offset, c + offset], [a + offset, c + offset, d + offset]]
            pts.append(p)
            offset += U.size
    pts = np.vstack(pts)
    faces = np.array(faces)
    key = np.round(pts * 1e9).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    v = pts[first[order]] * ex
    f = relabel[inverse[faces]]
    return TriMesh(v, _orient_outward(v, f))


def torus(n_major=8, n_minor=8, R=2.0, r=0.7):
    """Grid torus with ``2 * n_major * n_minor`` faces (genus 1)."""
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    u = 2 * np.pi * i.ravel() / n_major
    w = 2 * np.pi * j.ravel() / n_minor
    v = np.column_stack([(R + r * np.cos(w)) * np.cos(u), (R + r * np.cos(w)) * np.sin(u), r * np.sin(w)])
    idx = lambda a, b: (a % n_major) * n_minor + (b % n_minor)  # noqa: E731
    f = []
    for a in range(n_major):
        for b in range(n_minor):
            f.append([idx(a, b), idx(a + 1, b), idx(a + 1, b + 1)])
            f.append([idx(a, b), idx(a + 1, b + 1), idx(a, b + 1)])
    return TriMesh(v, np.array(f))


def planar_grid(n=10, lo=-1.0, hi=1.0, jitter=0.0, seed=0):
    """Triangulated square [lo, hi]^2 as complex vertex positions plus faces.

    Returns ``(z, faces, boundary)`` with counter-clockwise faces and the
    indices of the boundary vertices.
    """
    g = np.linspace(lo, hi, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    z = (X + 1j * Y).ravel()
    idx = np.arange(z.size).reshape(n + 1, n + 1)
    f = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            if (i + j) % 2:
                f += [[a, b, c], [a, c, d]]
            else:
                f += [[a, b, d], [b, c, d]]
    onb = (np.abs(X.ravel() - lo) < 1e-12) | (np.abs(X.ravel() - hi) < 1e-12) | \
          (np.abs(Y.ravel() - lo) < 1e-12) | (np.abs(Y.ravel() - hi) < 1e-12)
    if jitter:
        rng = np.random.default_rng(seed)
        h = (hi - lo) / n
        dz = jitter * h * (rng.uniform(-1, 1, z.size) + 1j * rng.uniform(-1, 1, z.size))
        z = np.where(onb, z, z + dz)
    return z, np.array(f), np.flatnonzero(onb)


def planar_disk(rings=8, radius=1.0):
    """Concentric-ring triangulation of a disk; returns ``(z, faces, boundary)``."""
    z = [0j]
    rings_idx = [[0]]
    for k in range(1, rings + 1):
        m = 6 * k
        t = 2 * np.pi * np.arange(m) / m
        start = len(z)
        z.extend(radius * k / rings * np.exp(1j * t))
        rings_idx.append(list(range(start, start + m)))
    f = []
    for k in range(1, rings + 1):
        inner, outer = rings_idx[k - 1], rings_idx[k]
        mi, mo = len(inner), len(outer)
        if mi == 1:
            f += [[inner[0], outer[o], outer[(o + 1) % mo]] for o in range(mo)]
            continue
        # walk both rings by angle
        i = o = 0
        while i < mi or o < mo:
            ti = (i + 0.5) / mi
            to = (o + 0.5) / mo
            if o < mo and (i >= mi or to <= ti):
                f.append([inner[i % mi], outer[o], outer[(o + 1) % mo]])
                o += 1
            else:
                f.append([inner[i % mi], outer[o % mo], inner[(i + 1) % mi]])
                i += 1
    z = np.array(z)
    f = np.array(f)
    # orient counter-clockwise
    a, b, c = z[f[:, 0]], z[f[:, 1]], z[f[:, 2]]
    neg = ((b - a).real * (c - a).imag - (b - a).imag * (c - a).real) < 0
    f[neg] = f[neg][:, [0, 2, 1]]
    return z, f, np.array(rings_idx[-1])
