"""Ellipsoidal conformal parameterization and elliptic-radii optimization.

Pipeline for a genus-0 mesh and radii (a, b, c):

1. spherical conformal map into the north chart (:mod:`.spherical`),
2. Moebius map sending the south pole vertex to 0, the north pole vertex
   to infinity and the alignment vertex onto the positive real axis,
3. a scale balancing the neighbourhoods of both poles,
4. a planar quasi-conformal map psi whose Beltrami coefficient equals the
   one of the inverse ellipsoidal projection, inverted by point location,
5. the inverse ellipsoidal stereographic projection.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import ConvexHull, cKDTree

from .beltrami import count_foldovers, pl_derivatives, signed_areas
from .lbs import ConstraintSet, solve_lbs
from .mesh import require_sphere_topology, signed_volume
from .metrics import build_report
from .projections import (INF, EllipsoidRadii, MobiusAlignment, balance_factor, ellipsoid_area,
                          ellipsoid_area_grad, face_mu_average, inv_ellip_stereographic, is_inf,
                          mobius_align, mu_inv_ellip, unit_sphere_coordinates)
from .spherical import PlanarEmbedding, spherical_param

log = logging.getLogger(__name__)

AUTO = "auto"

#: minimum number of vertices on the outer ring of the cap around infinity
CAP_RING = 24


class StageError(RuntimeError):
    """Numerical failure tagged with the pipeline stage that raised it."""

    def __init__(self, stage, message):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class PoleSpec:
    north: int | str = AUTO
    south: int | str = AUTO
    align: int | str = AUTO


@dataclass
class RadiiTrace:
    steps: list = field(default_factory=list)
    gamma: float = 0.1
    converged: bool = False

    def as_rows(self):
        return [(a, b, c, e) for (a, b, c), e in self.steps]


@dataclass
class ParamResult:
    positions: np.ndarray
    radii: EllipsoidRadii
    poles: tuple
    stages: dict
    report: object
    foldovers: int
    timings: dict = field(default_factory=dict)
    trace: RadiiTrace | None = None
    landmark_error: float | None = None
    bijectivity_rounds: int = 0


# ---------------------------------------------------------------------------
# poles and Moebius alignment

def _principal_axes(points):
    """Unit principal axes (rows, descending variance) with a deterministic sign."""
    x = points - points.mean(0)
    w, v = np.linalg.eigh(x.T @ x / len(x))
    axes = v[:, ::-1].T.copy()
    for k in range(3):
        j = np.argmax(np.abs(axes[k]))
        if axes[k, j] < 0:
            axes[k] = -axes[k]
    return w[::-1], axes


def auto_poles(mesh):
    """(north, south, align) from extremal vertices along the principal axes."""
    _, axes = _principal_axes(mesh.vertices)
    x = mesh.vertices - mesh.vertices.mean(0)
    p1 = x @ axes[0]
    north, south = int(np.argmax(p1)), int(np.argmin(p1))
    order = np.argsort(-(x @ axes[1]), kind="stable")
    align = int(next(i for i in order if i not in (north, south)))
    return north, south, align


def pole_vertices(mesh, spec):
    """Resolve ``auto`` entries and validate the three pole vertices."""
    spec = spec or PoleSpec()
    auto = auto_poles(mesh)
    out = []
    for name, val, default in zip(("north", "south", "align"), (spec.north, spec.south, spec.align), auto):
        v = default if val == AUTO or val is None else int(val)
        if not 0 <= v < mesh.n_vertices:
            raise ValueError(f"{name} vertex {v} out of range")
        out.append(v)
    if len(set(out)) != 3:
        raise ValueError("north, south and align vertices must be distinct")
    return tuple(out)


def resolve_poles(mesh, init, spec):
    """Moebius alignment for the planar embedding of ``init``; returns (alignment, poles)."""
    north, south, align = pole_vertices(mesh, spec)
    z = init.planar.z
    if z[north] == z[south]:
        raise ValueError("north and south vertices coincide in the plane")
    return MobiusAlignment.from_points(z[south], z[north], z[align]), (north, south, align)


def link_ring(faces, v):
    """Counter-clockwise cycle of the neighbours of vertex ``v``."""
    f = np.asarray(faces)
    rows, cols = np.nonzero(f == v)
    nxt = {}
    for r, c in zip(rows, cols):
        nxt[int(f[r, (c + 1) % 3])] = int(f[r, (c + 2) % 3])
    start = min(nxt)
    ring = [start]
    while True:
        n = nxt[ring[-1]]
        if n == start:
            break
        ring.append(n)
        if len(ring) > len(nxt):
            raise ValueError(f"vertex {v} does not have a disk neighbourhood")
    return np.array(ring)


def align_poles(planar, alignment, north):
    z = mobius_align(planar.z, alignment)
    return PlanarEmbedding(z, planar.faces, outer_face=None, inf_vertex=north)


def balance_scale(planar, north, south):
    """k making the north link ring and the inverted south link ring equal in perimeter."""
    f = planar.faces
    return balance_factor(planar.z[link_ring(f, north)], planar.z[link_ring(f, south)])


# ---------------------------------------------------------------------------
# quasi-conformal composition onto the ellipsoid

def _barycentric(tri, q):
    a, b, c = tri[..., 0], tri[..., 1], tri[..., 2]
    cross = lambda u, w: (np.conj(u) * w).imag  # noqa: E731
    area = cross(b - a, c - a)
    l0 = cross(b - q, c - q) / area
    l1 = cross(c - q, a - q) / area
    return np.stack([l0, l1, 1 - l0 - l1], axis=-1)


def pl_invert(domain, image, faces, queries, k=8, snap=True, max_candidates=512):
    """Pre-images of ``queries`` under the PL map ``domain -> image``.

    Each query is located in an image face through a KD-tree of face
    centroids, widening the candidate set until a containing face is
    found (at most ``max_candidates`` faces per query), and mapped back
    with barycentric coordinates.  Returns
    ``(preimages, face_index, inside)``.  Queries outside the image are
    snapped to the best face with a warning, or left NaN when ``snap`` is
    false.
    """
    f = np.asarray(faces)
    dom = np.asarray(domain, dtype=complex)
    img = np.asarray(image, dtype=complex)
    q = np.asarray(queries, dtype=complex)
    tri = img[f]
    cent = tri.mean(1)
    tree = cKDTree(np.column_stack([cent.real, cent.imag]))
    qxy = np.column_stack([q.real, q.imag])
    best_face = np.zeros(len(q), dtype=np.int64)
    best_bc = np.zeros((len(q), 3))
    best_score = np.full(len(q), -np.inf)
    pending = np.arange(len(q))
    kk = min(k, len(f))
    limit = min(max_candidates, len(f))
    while len(pending):
        _, cand = tree.query(qxy[pending], k=kk)
        cand = cand.reshape(len(pending), -1)
        with np.errstate(divide="ignore", invalid="ignore"):
            bc = _barycentric(tri[cand], q[pending][:, None])
        score = np.nan_to_num(bc.min(-1), nan=-np.inf)
        j = np.argmax(score, axis=1)
        sc = score[np.arange(len(pending)), j]
        better = sc > best_score[pending]
        upd = pending[better]
        best_score[upd] = sc[better]
        best_face[upd] = cand[better, j[better]]
        best_bc[upd] = bc[better, j[better]]
        pending = pending[best_score[pending] < -1e-10]
        if kk == limit:
            break
        kk = min(kk * 8, limit)
    inside = np.ones(len(q), dtype=bool)
    inside[pending] = False
    if len(pending) and snap:
        log.warning("pl_invert: %d queries outside the image, snapped to the nearest face", len(pending))
        bc = np.clip(best_bc[pending], 0, None)
        best_bc[pending] = bc / bc.sum(1, keepdims=True)
    out = (best_bc * dom[f[best_face]]).sum(1)
    if not snap:
        out[pending] = np.nan
    return out, best_face, inside


def _vertex_rings(faces, start, n):
    """Graph distance (in edges) of every vertex from ``start``."""
    f = np.asarray(faces)
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    adj = adj + adj.T
    return csgraph.shortest_path(adj, unweighted=True, indices=start)


def psi_domain(planar, min_ring=CAP_RING):
    """Faces of the psi solve and the cap vertices that receive boundary values.

    The cap is the smallest graph ball around the vertex at infinity whose
    outer ring has at least ``min_ring`` vertices; a coarser ring samples
    the boundary values too sparsely.  Faces the Moebius map turned
    clockwise (their circumcircle enclosed the north pole) join the cap.
    """
    z = planar.z
    fin = ~is_inf(z)
    f = planar.faces
    dist = _vertex_rings(f, planar.inf_vertex, len(z))
    reach = dist[np.isfinite(dist)]
    k = 1
    while k < reach.max() - 1 and np.sum(dist == k) < min_ring:
        k += 1
    pinned = dist <= k
    active = planar.active_faces()
    ok = np.zeros(len(f), dtype=bool)
    ok[active] = signed_areas(z, f[active]) > 0
    pinned[f[~ok].ravel()] = True
    pinned &= fin
    ok &= ~np.all(pinned[f], axis=1)
    return ok, np.flatnonzero(pinned)


def pole_mu(r):
    """Beltrami coefficient of the inverse projection at both poles, in the chart centred there."""
    a, b, _ = EllipsoidRadii.coerce(r)
    return (a - b) / (a + b)


@dataclass
class PsiMap:
    """Discrete psi: PL on ``faces`` of the domain, closed form on the cap around infinity.

    On the cap psi(u) = (g(u) - shift) / scale with
    g(u) = 1 / (1/u + mu0 / conj(u)).
    """

    domain: np.ndarray
    image: np.ndarray
    faces: np.ndarray
    mu0: float
    shift: complex
    scale: float

    def cap_forward(self, u):
        u = np.asarray(u, dtype=complex)
        g = u * np.conj(u) / (np.conj(u) + self.mu0 * u)
        return (g - self.shift) / self.scale

    def cap_inverse(self, w):
        # 1/g = s + mu0 conj(s) with s = 1/u; invert the real-linear map
        t = 1.0 / (np.asarray(w, dtype=complex) * self.scale + self.shift)
        s = (t - self.mu0 * np.conj(t)) / (1 - self.mu0 ** 2)
        return 1.0 / s

    def forward(self, points):
        """psi at arbitrary finite points (PL inside the solved region, closed form outside)."""
        p = np.asarray(points, dtype=complex)
        img, _, inside = pl_invert(self.image, self.domain, self.faces, p, snap=False)
        img[~inside] = self.cap_forward(p[~inside])
        return img

    def inverse(self, queries):
        q = np.asarray(queries, dtype=complex)
        out = np.full(len(q), INF, dtype=complex)
        fin = ~is_inf(q)
        pre, _, inside = pl_invert(self.domain, self.image, self.faces, q[fin], snap=False)
        pre[~inside] = self.cap_inverse(q[fin][~inside])
        out[fin] = pre
        return out


def solve_psi(planar, r, north, south):
    """Planar map psi with the Beltrami coefficient of the inverse ellipsoidal projection.

    Near infinity psi behaves like 1 / (C (1/z + mu0 / conj(z))), so the cap
    vertices are pinned to that form with C = 1.  The solution is then
    translated so that psi(0) = 0 and scaled so that its derivative at the
    south pole matches C, which keeps the two poles balanced.
    """
    r = EllipsoidRadii.coerce(r)
    z = planar.z
    active, pins = psi_domain(planar)
    f = planar.faces[active]
    mu_v = np.zeros(len(z), dtype=complex)
    fin = ~is_inf(z)
    mu_v[fin] = mu_inv_ellip(z[fin], r)
    mu = face_mu_average(mu_v, f)
    psi = PsiMap(z, None, f, pole_mu(r), 0j, 1.0)
    w = solve_lbs(z, f, mu, ConstraintSet.pins(pins, psi.cap_forward(z[pins])))
    star = np.any(f == south, axis=1)
    fz, _ = pl_derivatives(z, w, f[star])
    psi.shift = complex(w[south])
    psi.scale = float(np.sqrt(np.abs(fz.mean())))
    w[fin] = (w[fin] - psi.shift) / psi.scale
    psi.image = w
    return psi


def psi_inverse_stage(planar, r, north, south, psi=None, points=None):
    """psi^{-1} at ``points`` (default: every vertex); infinity stays at infinity.

    ``psi`` may be a previously solved :class:`PsiMap`; for a sphere psi is
    the identity.
    """
    r = EllipsoidRadii.coerce(r)
    points = planar.z if points is None else points
    if r.a == r.b == r.c:
        return np.array(points, dtype=complex)
    psi = psi or solve_psi(planar, r, north, south)
    return psi.inverse(points)


def qc_compose_to_ellipsoid(planar, r, north, south):
    """Ellipsoid positions (P^N_{abc})^{-1}(psi^{-1}(z)) of every vertex."""
    stage = psi_inverse_stage(planar, r, north, south)
    return inv_ellip_stereographic(stage, r), stage


# ---------------------------------------------------------------------------
# full pipeline

def outward_faces(mesh):
    f = np.asarray(mesh.faces)
    return f if signed_volume(mesh.vertices, f) >= 0 else f[:, [0, 2, 1]]


@dataclass
class Prepared:
    """Radii-independent stages shared by repeated ellipsoidal solves."""

    init: object
    balanced: PlanarEmbedding
    aligned: PlanarEmbedding
    poles: tuple
    k: float
    timings: dict


def prepare(mesh, spec=None, init=None):
    """Spherical map, Moebius alignment and balancing scale (all radius-free)."""
    timings = {}
    require_sphere_topology(mesh)
    t = time.perf_counter()
    try:
        init = init or spherical_param(mesh)
    except Exception as exc:
        raise StageError("spherical initialization", str(exc)) from exc
    timings["spherical"] = time.perf_counter() - t
    t = time.perf_counter()
    alignment, poles = resolve_poles(mesh, init, spec)
    aligned = align_poles(init.planar, alignment, poles[0])
    try:
        k = balance_scale(aligned, poles[0], poles[1])
    except ValueError as exc:
        raise StageError("balancing", str(exc)) from exc
    balanced = aligned.scaled(k)
    timings["align_balance"] = time.perf_counter() - t
    return Prepared(init, balanced, aligned, poles, k, timings)


def fecm(mesh, radii, spec=None, prepared=None, report=True):
    """Conformal parameterization of a genus-0 mesh onto the ellipsoid with ``radii``."""
    r = EllipsoidRadii.coerce(radii)
    prep = prepared or prepare(mesh, spec)
    timings = dict(prep.timings)
    t = time.perf_counter()
    north, south, _ = prep.poles
    try:
        positions, stage = qc_compose_to_ellipsoid(prep.balanced, r, north, south)
    except Exception as exc:
        raise StageError("quasi-conformal composition", str(exc)) from exc
    timings["composition"] = time.perf_counter() - t
    return finish(mesh, positions, r, prep, {"psi_inverse": stage}, timings, report)


def finish(mesh, positions, r, prep, extra_stages, timings, report=True, **report_extra):
    t = time.perf_counter()
    f = outward_faces(mesh)
    folds = count_foldovers(f, positions, r)
    rep = build_report(mesh, positions, tuple(r), folds, f, **report_extra) if report else None
    timings["report"] = time.perf_counter() - t
    stages = {"aligned": prep.aligned.z, "balanced": prep.balanced.z}
    stages.update(extra_stages)
    return ParamResult(positions, r, prep.poles, stages, rep, folds, timings)


# ---------------------------------------------------------------------------
# elliptic radii

def _min_area_rectangle_axes(pts2):
    """Orthonormal 2D axes of the minimum-area bounding rectangle."""
    hull = pts2[ConvexHull(pts2).vertices]
    best = None
    for i in range(len(hull)):
        e = hull[(i + 1) % len(hull)] - hull[i]
        n = np.linalg.norm(e)
        if n == 0:
            continue
        u = e / n
        v = np.array([-u[1], u[0]])
        area = np.ptp(hull @ u) * np.ptp(hull @ v)
        if best is None or area < best[0] - 1e-12 * area:
            best = (area, u, v)
    return best[1], best[2]


def principal_frame(points, rtol=1e-6):
    """Rows = alignment axes; near-equal variances fall back to bounding geometry."""
    x = points - points.mean(0)
    w, axes = _principal_axes(points)
    scale = w.max()
    if scale <= 0:
        raise ValueError("degenerate point set")
    close = np.abs(np.diff(w)) <= rtol * scale
    if close.all():
        return np.eye(3)
    if close.any():
        # a repeated eigenvalue: resolve the 2D subspace by the tightest rectangle
        j = 0 if close[0] else 1
        sub = axes[j:j + 2]
        u, v = _min_area_rectangle_axes(x @ sub.T)
        axes = axes.copy()
        axes[j], axes[j + 1] = u @ sub, v @ sub
    return axes


def pole_frame(mesh, poles):
    """Rows (e_a, e_b, e_c): e_c along south -> north, e_a towards the align vertex."""
    v = mesh.vertices
    north, south, align = poles
    ec = v[north] - v[south]
    ec /= np.linalg.norm(ec)
    ea = v[align] - v.mean(0)
    ea -= (ea @ ec) * ec
    n = np.linalg.norm(ea)
    if n == 0:
        raise ValueError("align vertex lies on the pole axis")
    ea /= n
    return np.array([ea, np.cross(ec, ea), ec])


def init_radii_bbox(mesh, frame=None):
    """Bounding-box side lengths in the alignment frame divided by their mean."""
    v = np.asarray(mesh.vertices, dtype=float)
    axes = principal_frame(v) if frame is None else np.asarray(frame, dtype=float)
    x = (v - v.mean(0)) @ axes.T
    side = x.max(0) - x.min(0)
    if np.any(side <= 0):
        raise ValueError("mesh has zero extent along an axis")
    return EllipsoidRadii(*(side / side.mean()))


def _face_area_terms(mesh, stage):
    """Unit-sphere edge cross products m per face and the source area fractions."""
    s = unit_sphere_coordinates(stage)
    f = mesh.faces
    m = np.cross(s[f[:, 1]] - s[f[:, 0]], s[f[:, 2]] - s[f[:, 0]])
    p = mesh.vertices
    src = 0.5 * np.linalg.norm(np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]]), axis=1)
    return m, src / src.sum()


def _area_energy(m, src_frac, r, grad):
    a, b, c = r
    S = (b * c * m[:, 0]) ** 2 + (a * c * m[:, 1]) ** 2 + (a * b * m[:, 2]) ** 2
    ok = S > 0
    if not ok.all():
        log.warning("E_area: %d degenerate projected faces excluded", int((~ok).sum()))
    S, m2, src_frac = S[ok], m[ok] ** 2, src_frac[ok]
    area = 0.5 * np.sqrt(S)
    total = ellipsoid_area(r)
    d = np.log(area / total) - np.log(src_frac)
    E = float(np.mean(d * d))
    if not grad:
        return E
    # dS/da etc.; dA/dr = dS/dr / (4 sqrt(S)) = dS/dr / (8 A)
    dS = np.column_stack([2 * a * (c * c * m2[:, 1] + b * b * m2[:, 2]),
                          2 * b * (c * c * m2[:, 0] + a * a * m2[:, 2]),
                          2 * c * (b * b * m2[:, 0] + a * a * m2[:, 1])])
    dlogA = dS / (8 * area * area)[:, None]
    dlogT = ellipsoid_area_grad(r) / total
    g = 2 * np.mean(d[:, None] * (dlogA - dlogT), axis=0)
    return E, g


def E_area(mesh, stage, r):
    """Mean squared log area ratio with the ellipsoid area as image normalizer.

    ``stage`` is the planar embedding before the ellipsoidal projection; the
    image vertices are (a X, b Y, c Z) for its unit-sphere lift (X, Y, Z).
    """
    m, frac = _face_area_terms(mesh, stage)
    return _area_energy(m, frac, tuple(EllipsoidRadii.coerce(r)), grad=False)


def grad_E_area(mesh, stage, r):
    """Analytic gradient of :func:`E_area` with respect to (a, b, c), stage held fixed."""
    m, frac = _face_area_terms(mesh, stage)
    return _area_energy(m, frac, tuple(EllipsoidRadii.coerce(r)), grad=True)[1]


def _normalize(r):
    r = np.asarray(r, dtype=float)
    return r * (3.0 / r.sum())


_TANGENT = np.array([[1.0, -1.0, 0.0], [1.0, 1.0, -2.0]]) / np.sqrt([[2.0], [6.0]])


def optimize_radii(mesh, spec=None, r0=None, gamma0=0.1, max_iters=50, tol=1e-6,
                   armijo=1e-4, max_backtracks=20, fd_step=1e-3, prepared=None):
    """Gradient descent on E_area over the radii with Armijo backtracking.

    The objective is E_area of the full map, with psi re-solved for every
    radii triple.  Holding the pre-projection stage fixed (as
    :func:`grad_E_area` does) ignores how psi moves vertices between the
    ellipsoid's regions and can point uphill, so the descent direction is a
    central difference of the full objective in the plane a + b + c = 3.
    Only psi and the projection depend on the radii; the spherical map,
    alignment and balancing are computed once.  Returns
    ``(ParamResult, RadiiTrace)`` for the best radii seen.
    """
    prep = prepared or prepare(mesh, spec)
    north, south, _ = prep.poles
    if r0 is None:
        r0 = init_radii_bbox(mesh, pole_frame(mesh, prep.poles))
    r = _normalize(tuple(EllipsoidRadii.coerce(r0)))
    t = time.perf_counter()

    def evaluate(rr):
        stage = psi_inverse_stage(prep.balanced, rr, north, south)
        return E_area(mesh, stage, rr), stage

    def gradient(rr):
        g = np.zeros(3)
        for e in _TANGENT:
            hi = _normalize(rr + fd_step * e)
            lo = _normalize(rr - fd_step * e)
            g += (evaluate(hi)[0] - evaluate(lo)[0]) / (2 * fd_step) * e
        return g

    E, stage = evaluate(r)
    trace = RadiiTrace([(tuple(float(x) for x in r), E)], gamma0)
    gamma = gamma0
    for _ in range(max_iters):
        g = gradient(r)
        gg = float(g @ g)
        if gg == 0:
            trace.converged = True
            break
        accepted = False
        for _ in range(max_backtracks):
            cand = r - gamma * g
            if np.all(cand > 0):
                cand = _normalize(cand)
                Ec, sc = evaluate(cand)
                if Ec <= E - armijo * gamma * gg:
                    accepted = True
                    break
            gamma *= 0.5
        if not accepted:
            trace.converged = True
            break
        dE = E - Ec
        r, E, stage = cand, Ec, sc
        trace.steps.append((tuple(float(x) for x in r), E))
        gamma = min(2 * gamma, gamma0 * 2 ** 10)
        if dE <= tol * E:
            trace.converged = True
            break
    trace.gamma = gamma
    timings = dict(prep.timings)
    timings["radii_optimization"] = time.perf_counter() - t
    rr = EllipsoidRadii(*r)
    positions = inv_ellip_stereographic(stage, rr)
    res = finish(mesh, positions, rr, prep, {"psi_inverse": stage}, timings,
                 radii_trace=trace.as_rows())
    res.trace = trace
    return res, trace
