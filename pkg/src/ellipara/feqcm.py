"""Landmark-matching quasi-conformal parameterization onto an ellipsoid.

The balanced planar embedding is deformed by a harmonic map that pulls the
landmark vertices toward the planar images of their ellipsoid targets; the
deformation is then made bijective by clamping its Beltrami coefficient and
re-solving, and finally lifted to the ellipsoid through psi^{-1} and the
inverse ellipsoidal projection.
"""

import csv
import logging
import time
from dataclasses import dataclass

import numpy as np

from .beltrami import mu_planar_faces, signed_areas, truncate_mu
from .fecm import StageError, finish, prepare, solve_psi
from .lbs import ConstraintSet, LBSError, solve_landmark_harmonic, solve_lbs
from .metrics import landmark_error
from .projections import (EllipsoidRadii, ellip_stereographic, ellipsoid_residual,
                          inv_ellip_stereographic)

log = logging.getLogger(__name__)

#: default bound on |mu| of the landmark deformation
BOUND = 0.95
TARGET_TOL = 1e-6


class LandmarkError(ValueError):
    pass


class BijectivityError(RuntimeError):
    """Clamping rounds ran out while flipped or over-bound faces remained."""

    def __init__(self, flips, max_mu, rounds):
        self.flips, self.max_mu, self.rounds = flips, max_mu, rounds
        super().__init__(f"bijectivity not reached after {rounds} rounds: "
                         f"{flips} flipped faces, max |mu| {max_mu:.4g}")


@dataclass
class LandmarkSet:
    """Vertex indices paired with target points on the ellipsoid, plus the weight."""

    indices: np.ndarray
    targets: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 3)
        if len(self.indices) == 0:
            raise LandmarkError("landmark set is empty")
        if len(self.indices) != len(self.targets):
            raise LandmarkError("one target per landmark index is required")
        if len(np.unique(self.indices)) != len(self.indices):
            raise LandmarkError("landmark indices must be distinct")
        if np.any(self.indices < 0):
            raise LandmarkError("landmark indices must be non-negative")
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise LandmarkError("lambda must be positive")

    def __len__(self):
        return len(self.indices)

    def with_lambda(self, lam):
        return LandmarkSet(self.indices, self.targets, lam)

    def validate(self, r, n_vertices=None):
        """Check the targets lie on the ellipsoid and the indices fit the mesh."""
        res = np.abs(ellipsoid_residual(self.targets, r))
        if np.any(res > TARGET_TOL):
            i = int(np.argmax(res))
            raise LandmarkError(f"target {i} is off the ellipsoid (residual {res[i]:.3g})")
        if n_vertices is not None and np.any(self.indices >= n_vertices):
            raise LandmarkError("landmark index out of range")


def load_landmarks(path, lam=1.0):
    """Read ``vertex_index,qx,qy,qz`` rows; a non-numeric first row is a header."""
    idx, pts = [], []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 4:
                raise LandmarkError(f"line {k + 1}: expected 4 fields, got {len(row)}")
            try:
                i = int(row[0])
                q = [float(x) for x in row[1:]]
            except ValueError:
                if k == 0:
                    continue
                raise LandmarkError(f"line {k + 1}: malformed landmark row") from None
            idx.append(i)
            pts.append(q)
    return LandmarkSet(idx, np.array(pts).reshape(-1, 3), lam)


def write_landmarks(path, landmarks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex_index", "qx", "qy", "qz"])
        for i, q in zip(landmarks.indices, landmarks.targets):
            w.writerow([int(i)] + [repr(float(x)) for x in q])


def lift_landmarks(landmarks, r):
    """Planar targets P^N_{abc}(q_i) of the landmark points."""
    r = EllipsoidRadii.coerce(r)
    q = np.asarray(getattr(landmarks, "targets", landmarks), dtype=float).reshape(-1, 3)
    north = np.isclose(q[:, 2], r.c, rtol=0, atol=TARGET_TOL * r.c) & \
        (np.hypot(q[:, 0] / r.a, q[:, 1] / r.b) < 1e-6)
    if np.any(north):
        raise LandmarkError("reserve pole for puncture: a target sits at the north pole")
    return ellip_stereographic(q, r)


def _violations(domain, image, faces, bound):
    flips = signed_areas(image, faces) <= 0
    mu = np.abs(mu_planar_faces(domain, image, faces).mu)
    over = ~flips & ~(mu <= bound + 1e-9)
    return flips, over, mu


def smooth_mu(mu, faces, n_vertices, steps=1):
    """Average face coefficients through their vertices ``steps`` times."""
    f = np.asarray(faces)
    cnt = np.bincount(f.ravel(), minlength=n_vertices)
    cnt = np.maximum(cnt, 1)
    m = np.asarray(mu, dtype=complex)
    for _ in range(steps):
        rep = np.repeat(m, 3)
        v = (np.bincount(f.ravel(), rep.real, n_vertices)
             + 1j * np.bincount(f.ravel(), rep.imag, n_vertices)) / cnt
        m = v[f].mean(1)
    return m


def enforce_bijectivity(domain, image, faces, constraints, bound=BOUND, max_rounds=10,
                        strict=True, smoothing=1):
    """Clamp the Beltrami coefficient of ``domain -> image`` and rebuild the map.

    Each round truncates |mu| to ``bound`` (flipped faces get the truncated
    coefficient of their reflection, which keeps the direction of stretch)
    and smooths it ``smoothing`` times through the vertices, then
    re-solves the linear Beltrami system with ``constraints``, whose
    soft terms hold the landmarks.  Returns ``(image, rounds)``; a fold-free
    map within the bound comes back untouched with 0 rounds.  When rounds
    run out with flipped faces left, :class:`BijectivityError` is raised
    (or logged when ``strict`` is false).
    """
    domain = np.asarray(domain, dtype=complex)
    image = np.asarray(image, dtype=complex)
    faces = np.asarray(faces)
    flips, over, mu = _violations(domain, image, faces, bound)
    rounds = 0
    while (flips.any() or over.any()) and rounds < max_rounds:
        rounds += 1
        m = mu_planar_faces(domain, image, faces).mu
        # a flipped face has |mu| > 1; 1/conj(mu) is the coefficient of its unfolded version
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.where(np.abs(m) > 1, 1 / np.conj(m), m)
        m = truncate_mu(m, bound).mu
        if smoothing:
            m = truncate_mu(smooth_mu(m, faces, len(domain), smoothing), bound).mu
        try:
            image = solve_lbs(domain, faces, m, constraints)
        except LBSError as exc:
            raise StageError("bijectivity enforcement", str(exc)) from exc
        flips, over, mu = _violations(domain, image, faces, bound)
        log.debug("bijectivity round %d: %d flips, %d over bound", rounds,
                  int(flips.sum()), int(over.sum()))
    if flips.any():
        err = BijectivityError(int(flips.sum()), float(np.nanmax(mu)), rounds)
        if strict:
            raise err
        log.warning("%s", err)
    elif over.any():
        # orientation is fine; only the clamp contract is loose
        log.info("bijectivity: %d faces above |mu| bound after %d rounds", int(over.sum()), rounds)
    return image, rounds


def deformation_domain(planar, landmarks):
    """Faces and pinned vertices of the landmark deformation.

    Only the link of the vertex at infinity and faces the Moebius map left
    clockwise are held fixed; identity boundary values need no wide cap.
    """
    f = planar.faces
    active = planar.active_faces()
    flipped = np.zeros(len(f), dtype=bool)
    flipped[active] = signed_areas(planar.z, f[active]) <= 0
    near = np.any(f == planar.inf_vertex, axis=1) | flipped
    pinned = np.zeros(len(planar.z), dtype=bool)
    pinned[f[near].ravel()] = True
    pinned[planar.inf_vertex] = False
    if np.any(pinned[landmarks]):
        raise LandmarkError("reserve pole for puncture: landmark adjacent to the north vertex")
    ok = active & ~near
    return ok, np.flatnonzero(pinned)


def landmark_weights(z):
    """Squared conformal factor (2 / (1 + |z|^2))^2 of the unit-sphere chart.

    Scaling each planar penalty by it measures the mismatch in sphere
    units, so one lambda means the same everywhere on the surface.
    """
    return (2.0 / (1.0 + np.abs(z) ** 2)) ** 2


def landmark_deformation(planar, vertices, targets, lam, bound=BOUND, max_rounds=10):
    """Harmonic landmark map Phi of the balanced embedding, made bijective.

    The neighbourhood of the vertex at infinity is held fixed, so Phi is the
    identity far away; everything else minimises the Dirichlet energy plus
    ``lam`` times the squared landmark mismatch.
    """
    z = planar.z
    active, pins = deformation_domain(planar, vertices)
    lam = lam * landmark_weights(z[vertices])
    f = planar.faces[active]
    try:
        phi = solve_landmark_harmonic(z, f, vertices, targets, lam, pins=(pins, z[pins]))
    except LBSError as exc:
        raise StageError("landmark harmonic map", str(exc)) from exc
    cons = ConstraintSet(hard_idx=pins, hard_val=z[pins], soft_idx=vertices,
                         soft_val=targets, soft_weight=lam)
    phi, rounds = enforce_bijectivity(z, phi, f, cons, bound, max_rounds)
    return phi, rounds


def feqcm(mesh, radii, landmarks, spec=None, prepared=None, bound=BOUND, max_rounds=10,
          compensate=True, report=True):
    """Landmark-matching quasi-conformal parameterization onto the ellipsoid ``radii``.

    Landmark targets are lifted with P^N_{abc}.  With ``compensate`` the
    lifted targets are additionally pushed through psi (solved once on the
    balanced embedding), so that psi^{-1} in the final composition returns
    each landmark to its own target; without it the lifted targets are used
    directly and the psi distortion remains in the landmark error.
    """
    r = EllipsoidRadii.coerce(radii)
    landmarks.validate(r, mesh.n_vertices)
    prep = prepared or prepare(mesh, spec)
    north, south, _ = prep.poles
    if np.any(landmarks.indices == north):
        raise LandmarkError("reserve pole for puncture: the north vertex cannot be a landmark")
    timings = dict(prep.timings)
    planar = prep.balanced
    t = time.perf_counter()
    targets = lift_landmarks(landmarks, r)
    sphere = r.a == r.b == r.c
    try:
        psi = None if sphere else solve_psi(planar, r, north, south)
        if compensate and psi is not None:
            targets = psi.forward(targets)
    except Exception as exc:
        raise StageError("quasi-conformal composition", str(exc)) from exc
    timings["psi"] = time.perf_counter() - t

    t = time.perf_counter()
    phi, rounds = landmark_deformation(planar, landmarks.indices, targets, landmarks.lam,
                                       bound, max_rounds)
    timings["landmark_map"] = time.perf_counter() - t

    t = time.perf_counter()
    stage = phi.copy() if psi is None else psi.inverse(phi)
    positions = inv_ellip_stereographic(stage, r)
    timings["composition"] = time.perf_counter() - t
    err = landmark_error(positions, landmarks)
    res = finish(mesh, positions, r, prep, {"phi": phi, "psi_inverse": stage}, timings,
                 report, landmark_error=err)
    res.bijectivity_rounds = rounds
    res.landmark_error = err
    return res
