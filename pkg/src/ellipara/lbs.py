"""Linear Beltrami solver and landmark-weighted harmonic solves on planar meshes.

Both solvers assemble the P1 finite-element stiffness matrix

    K_ij = sum_T |T| grad(phi_i)^T A_T grad(phi_j)

with one symmetric positive-definite 2x2 matrix A_T per face, and solve
the real and imaginary parts of the map with a single sparse LU
factorization.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .beltrami import hat_gradients
from .mesh import cotangent_weights

MU_CLAMP = 1e-8


class LBSError(RuntimeError):
    """Singular or ill-posed solve."""


class NonAdmissibleError(ValueError):
    pass


def alpha_from_mu(mu, eps=MU_CLAMP):
    """Coefficients (alpha1, alpha2, alpha3) of A for mu = rho + i*tau."""
    mu = np.asarray(mu, dtype=complex)
    if np.any(~np.isfinite(mu)) or np.any(np.abs(mu) > 1 - eps):
        raise NonAdmissibleError("non-admissible coefficient: |mu| must stay below 1 - %g" % eps)
    rho, tau = mu.real, mu.imag
    den = 1 - rho ** 2 - tau ** 2
    a1 = ((rho - 1) ** 2 + tau ** 2) / den
    a2 = -2 * tau / den
    a3 = ((1 + rho) ** 2 + tau ** 2) / den
    return a1, a2, a3


def assemble_stiffness(z, faces, coeffs=None, n=None):
    """Sparse symmetric stiffness matrix of a planar mesh.

    ``coeffs`` is ``(alpha1, alpha2, alpha3)`` (scalars or per-face arrays);
    ``None`` means the identity, which reproduces the cotangent Laplacian.
    """
    z = np.asarray(z, dtype=complex)
    f = np.asarray(faces)
    n = len(z) if n is None else n
    g, area = hat_gradients(z, f)
    bad = ~np.isfinite(g).all(1) | (area == 0)
    if np.any(bad):
        raise LBSError(f"degenerate face {int(np.flatnonzero(bad)[0])} in planar domain")
    if coeffs is None:
        a1, a2, a3 = 1.0, 0.0, 1.0
    else:
        a1, a2, a3 = coeffs
    a1 = np.broadcast_to(a1, area.shape)
    a2 = np.broadcast_to(a2, area.shape)
    a3 = np.broadcast_to(a3, area.shape)
    gx, gy = g.real, g.imag
    w = np.abs(area)
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            v = w * (a1 * gx[:, i] * gx[:, j] + a2 * (gx[:, i] * gy[:, j] + gy[:, i] * gx[:, j])
                     + a3 * gy[:, i] * gy[:, j])
            rows.append(f[:, i])
            cols.append(f[:, j])
            vals.append(v)
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return K.tocsr()


def cotangent_laplacian(points, faces, n=None):
    """Cotangent Laplacian from corner angles: L_ij = -(cot a + cot b)/2, rows sum to zero."""
    f = np.asarray(faces)
    n = len(points) if n is None else n
    cots = cotangent_weights(points, f)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        w = 0.5 * cots[:, k]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return L.tocsr()


@dataclass
class ConstraintSet:
    """Hard pins and weighted soft landmarks for a planar solve."""

    hard_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    hard_val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    soft_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    soft_val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    soft_weight: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.hard_idx = np.asarray(self.hard_idx, dtype=np.int64).ravel()
        self.hard_val = np.broadcast_to(np.asarray(self.hard_val, dtype=complex), self.hard_idx.shape).copy()
        self.soft_idx = np.asarray(self.soft_idx, dtype=np.int64).ravel()
        self.soft_val = np.broadcast_to(np.asarray(self.soft_val, dtype=complex), self.soft_idx.shape).copy()
        self.soft_weight = np.broadcast_to(np.asarray(self.soft_weight, dtype=float), self.soft_idx.shape).copy()
        if len(np.unique(self.hard_idx)) != len(self.hard_idx):
            raise ValueError("pinned indices must be distinct")
        if np.any(self.soft_weight < 0):
            raise ValueError("landmark weights must be non-negative")

    @classmethod
    def pins(cls, idx, values):
        return cls(hard_idx=idx, hard_val=values)

    def well_posed(self):
        return len(self.hard_idx) > 0 or bool(np.any(self.soft_weight > 0))


def solve_system(K, constraints, n_active=None, guess=None):
    """Solve K x = 0 on free vertices subject to pins, plus diagonal soft penalties.

    Soft landmarks add ``w * |x_i - q_i|^2`` to the quadratic energy
    ``x^H K x``.  Vertices that no face references (``n_active`` mask) keep
    the value of ``guess``.
    """
    n = K.shape[0]
    if not constraints.well_posed():
        raise LBSError("singular system: no pinned vertex and no positive landmark weight")
    active = np.ones(n, dtype=bool) if n_active is None else n_active
    x = np.zeros(n, dtype=complex) if guess is None else np.array(guess, dtype=complex)
    x[constraints.hard_idx] = constraints.hard_val

    free = active.copy()
    free[constraints.hard_idx] = False
    fidx = np.flatnonzero(free)
    if len(fidx) == 0:
        return x
    pos = -np.ones(n, dtype=np.int64)
    pos[fidx] = np.arange(len(fidx))

    K = K.tocsr()
    Kff = K[fidx][:, fidx]
    rhs = -(K[fidx][:, constraints.hard_idx] @ constraints.hard_val) if len(constraints.hard_idx) else \
        np.zeros(len(fidx), dtype=complex)
    soft_free = pos[constraints.soft_idx] >= 0
    if np.any(soft_free):
        si = pos[constraints.soft_idx[soft_free]]
        sw = constraints.soft_weight[soft_free]
        Kff = Kff + sp.coo_matrix((sw, (si, si)), shape=Kff.shape).tocsr()
        np.add.at(rhs, si, sw * constraints.soft_val[soft_free])
    try:
        lu = spla.splu(Kff.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        sol = lu.solve(np.column_stack([rhs.real, rhs.imag]))
    except RuntimeError as exc:
        raise LBSError(f"singular system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise LBSError("singular system: non-finite solution")
    x[fidx] = sol[:, 0] + 1j * sol[:, 1]
    return x


def _active_mask(n, faces):
    m = np.zeros(n, dtype=bool)
    m[np.asarray(faces).ravel()] = True
    return m


def solve_lbs(z, faces, mu, constraints):
    """Quasi-conformal map of the planar mesh ``(z, faces)`` with per-face Beltrami coefficient ``mu``.

    Vertices outside ``faces`` (e.g. a vertex at infinity) are returned unchanged.
    """
    z = np.asarray(z, dtype=complex)
    mu = np.asarray(getattr(mu, "mu", mu), dtype=complex)
    coeffs = alpha_from_mu(np.broadcast_to(mu, (len(faces),)))
    K = assemble_stiffness(np.where(_active_mask(len(z), faces), z, 0), faces, coeffs, n=len(z))
    return solve_system(K, constraints, _active_mask(len(z), faces), guess=z)


def solve_landmark_harmonic(z, faces, landmarks, targets, lam, pins=None):
    """Minimise sum |grad phi|^2 + lam * sum |phi(p_i) - q_i|^2 over PL maps of the mesh.

    ``lam`` is a scalar or one weight per landmark; ``pins`` is an
    optional ``(indices, values)`` pair of hard constraints.
    """
    if np.any(np.asarray(lam) <= 0):
        raise ValueError("lambda must be positive")
    z = np.asarray(z, dtype=complex)
    hard_idx, hard_val = pins if pins is not None else ((), ())
    cons = ConstraintSet(hard_idx=hard_idx, hard_val=hard_val, soft_idx=landmarks,
                         soft_val=targets, soft_weight=lam)
    active = _active_mask(len(z), faces)
    K = assemble_stiffness(np.where(active, z, 0), faces, n=len(z))
    return solve_system(K, cons, active, guess=z)


def dirichlet_energy(K, x, constraints=None):
    """x^H K x plus the soft penalty terms of ``constraints``."""
    x = np.asarray(x, dtype=complex)
    e = float(np.real(np.vdot(x, K @ x)))
    if constraints is not None and len(constraints.soft_idx):
        d = x[constraints.soft_idx] - constraints.soft_val
        e += float(np.sum(constraints.soft_weight * np.abs(d) ** 2))
    return e
