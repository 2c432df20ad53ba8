"""Closed-form maps between the unit sphere, the ellipsoid and the extended plane.

Points of the extended complex plane are numpy complex values; the point at
infinity is ``INF`` (real part +inf, imaginary part 0) and is produced and
consumed explicitly, never through NaN arithmetic.
"""

from dataclasses import dataclass

import numpy as np

INF = complex(np.inf, 0.0)

#: exponent of Thomsen's ellipsoid surface-area approximation
THOMSEN_P = 1.6075


def is_inf(z):
    return np.isinf(np.asarray(z).real) | np.isinf(np.asarray(z).imag)


def _as_points(p):
    p = np.asarray(p, dtype=float)
    return p.reshape(-1, 3), p.ndim == 1


def _as_complex(z):
    z = np.asarray(z, dtype=complex)
    return z.reshape(-1), z.ndim == 0


def _ret(x, scalar):
    return x[0] if scalar else x


@dataclass(frozen=True)
class EllipsoidRadii:
    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in "abc":
            val = float(getattr(self, name))
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"radius {name} must be positive, got {val}")
            object.__setattr__(self, name, val)

    def __iter__(self):
        return iter((self.a, self.b, self.c))

    def as_array(self):
        return np.array([self.a, self.b, self.c])

    @classmethod
    def coerce(cls, r):
        return r if isinstance(r, cls) else cls(*r)


# ---------------------------------------------------------------------------
# unit-sphere stereographic projections

def stereographic(p, pole="north"):
    """P^N(X,Y,Z) = (X + iY)/(1 - Z); the south variant divides by 1 + Z."""
    return ellip_stereographic(p, (1.0, 1.0, 1.0), pole)


def inv_stereographic(z, pole="north"):
    """Inverse of :func:`stereographic`; INF maps to the projection pole."""
    return inv_ellip_stereographic(z, (1.0, 1.0, 1.0), pole)


def pole_swap(z):
    """z / |z|^2, the plane-level form of projecting from the opposite pole."""
    z, scalar = _as_complex(z)
    out = np.empty_like(z)
    inf = is_inf(z)
    zero = z == 0
    ok = ~(inf | zero)
    # 1 / conj(z) avoids the underflow of |z|^2 for tiny z
    with np.errstate(over="ignore", invalid="ignore"):
        w = 1.0 / np.conj(z[ok])
    w[~np.isfinite(w)] = INF
    out[ok] = w
    out[inf] = 0.0
    out[zero] = INF
    return _ret(out, scalar)


def polygon_perimeter(z):
    """Perimeter of the closed polygon through the complex points ``z``."""
    z = np.asarray(z, dtype=complex)
    return float(np.abs(np.roll(z, -1) - z).sum())


def balance_factor(north, south):
    """Scale k equalising Per(k * north) and Per(pole_swap(k * south)).

    ``north`` and ``south`` are polygons (complex vertex loops); the south
    polygon must surround the origin.  k = sqrt(Per(N) * Per(S^-1)) / Per(N).
    """
    pn = polygon_perimeter(north)
    ps = polygon_perimeter(pole_swap(np.asarray(south, dtype=complex)))
    if not (np.isfinite(pn) and np.isfinite(ps)) or pn <= 0 or ps <= 0:
        raise ValueError("balance polygons must be finite and non-degenerate")
    return float(np.sqrt(pn * ps) / pn)


# ---------------------------------------------------------------------------
# Moebius alignment

@dataclass(frozen=True)
class MobiusAlignment:
    """g(z) = exp(i*theta) * (z - z0) / (z - z1)."""

    z0: complex
    z1: complex
    theta: float

    @classmethod
    def from_points(cls, z0, z1, z2):
        """Send z0 to 0, z1 to infinity and z2 onto the positive real axis."""
        z0, z1, z2 = complex(z0), complex(z1), complex(z2)
        if z0 == z1:
            raise ValueError("z0 and z1 must differ")
        if is_inf(z1):
            ratio = z2 - z0
        else:
            ratio = (z2 - z0) / (z2 - z1)
        theta = -float(np.angle(ratio))
        if theta >= np.pi:
            theta -= 2 * np.pi
        return cls(z0, z1, theta)


def mobius_align(z, m):
    z, scalar = _as_complex(z)
    rot = np.exp(1j * m.theta)
    out = np.empty_like(z)
    zinf = is_inf(z)
    if is_inf(m.z1):
        out[~zinf] = rot * (z[~zinf] - m.z0)
        out[zinf] = INF
        return _ret(out, scalar)
    at_pole = ~zinf & (z == m.z1)
    ok = ~(zinf | at_pole)
    out[ok] = rot * (z[ok] - m.z0) / (z[ok] - m.z1)
    out[at_pole] = INF
    out[zinf] = rot
    return _ret(out, scalar)


# ---------------------------------------------------------------------------
# ellipsoidal stereographic projections

def ellip_stereographic(p, r, pole="north"):
    """(X/a)/(1 -+ Z/c) + i (Y/b)/(1 -+ Z/c); the projection pole maps to INF."""
    a, b, c = EllipsoidRadii.coerce(r)
    p, single = _as_points(p)
    s = 1.0 if pole == "north" else -1.0
    if pole not in ("north", "south"):
        raise ValueError(f"pole must be 'north' or 'south', got {pole!r}")
    zc = p[:, 2] / c
    den = 1.0 - s * zc
    x, y = p[:, 0] / a, p[:, 1] / b
    at_pole = den <= 0
    out = np.empty(len(p), dtype=complex)
    ok = ~at_pole
    # 1 - Z is tiny near the pole; (x + iy)/(1 - Z) = (1 + Z)/(x - iy) is stable there
    near = ok & (den < 0.5)
    far = ok & ~near
    out[far] = (x[far] + 1j * y[far]) / den[far]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[near] = (1.0 + s * zc[near]) / (x[near] - 1j * y[near])
    out[near & ~np.isfinite(out)] = INF
    out[at_pole] = INF
    return out[0] if single else out


def inv_ellip_stereographic(z, r, pole="north"):
    """(2ax, 2by, +-c(|z|^2 - 1)) / (1 + |z|^2); INF maps to (0, 0, +-c)."""
    a, b, c = EllipsoidRadii.coerce(r)
    if pole not in ("north", "south"):
        raise ValueError(f"pole must be 'north' or 'south', got {pole!r}")
    z, scalar = _as_complex(z)
    s = 1.0 if pole == "north" else -1.0
    out = np.empty((len(z), 3))
    inf = is_inf(z)
    ok = ~inf
    zz = z[ok]
    m = np.abs(zz)
    small = m <= 1
    big = ~small
    x, y = zz.real, zz.imag
    res = np.empty((len(zz), 3))
    d = 1 + m[small] ** 2
    res[small, 0] = 2 * x[small] / d
    res[small, 1] = 2 * y[small] / d
    res[small, 2] = (m[small] ** 2 - 1) / d
    # for |z| > 1 divide through by |z|^2 to avoid overflow
    w = 1.0 / zz[big]
    wm2 = np.abs(w) ** 2
    d = 1 + wm2
    res[big, 0] = 2 * w.real / d
    res[big, 1] = -2 * w.imag / d
    res[big, 2] = (1 - wm2) / d
    out[ok] = res * np.array([a, b, s * c])
    out[inf] = [0.0, 0.0, s * c]
    return out[0] if scalar else out


def unit_sphere_coordinates(z):
    """Inverse north stereographic projection onto the unit sphere (vectorised)."""
    return inv_ellip_stereographic(z, (1.0, 1.0, 1.0))


# ---------------------------------------------------------------------------
# Beltrami coefficient of the inverse ellipsoidal projection

def first_fundamental_form(z, r):
    """(E, F, G) of the inverse north ellipsoidal projection, up to a common positive factor.

    For |z| <= 1 the factor is (1 + |z|^2)^4; beyond that the numerators are
    divided by |z|^4 so that huge inputs do not overflow.  The ratio that
    defines the Beltrami coefficient is unaffected.
    """
    a, b, c = EllipsoidRadii.coerce(r)
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    m2 = x * x + y * y
    scale = np.where(m2 > 1, np.sqrt(m2), 1.0)
    xs, ys = x / scale, y / scale
    inv2 = 1.0 / scale ** 2
    # (-x^2 + y^2 + 1) and (x^2 - y^2 + 1) rescaled by |z|^2
    p = ys * ys - xs * xs + inv2
    q = xs * xs - ys * ys + inv2
    E = 4 * a * a * p * p + 16 * b * b * xs * xs * ys * ys + 16 * c * c * xs * xs * inv2
    F = -8 * a * a * xs * ys * p - 8 * b * b * xs * ys * q + 16 * c * c * xs * ys * inv2
    G = 16 * a * a * xs * xs * ys * ys + 4 * b * b * q * q + 16 * c * c * ys * ys * inv2
    return E, F, G


def mu_from_metric(E, F, G):
    """(E - G + 2iF) / (E + G + 2 sqrt(EG - F^2))."""
    det = np.sqrt(np.maximum(E * G - F * F, 0.0))
    return (E - G + 2j * F) / (E + G + 2 * det)


def mu_inv_ellip(z, r):
    """Beltrami coefficient of the inverse north ellipsoidal projection at finite z."""
    z = np.asarray(z, dtype=complex)
    if np.any(is_inf(z)):
        raise ValueError("mu_inv_ellip needs finite points")
    E, F, G = first_fundamental_form(z, r)
    return mu_from_metric(E, F, G)


def face_mu_average(mu_at_vertices, faces=None):
    """Mean of the three vertex values; with ``faces`` gathers per face first."""
    mu = np.asarray(mu_at_vertices)
    if faces is None:
        return mu.sum(axis=-1) / 3
    f = np.asarray(faces)
    return (mu[f[:, 0]] + mu[f[:, 1]] + mu[f[:, 2]]) / 3


# ---------------------------------------------------------------------------
# ellipsoid surface area (Thomsen)

def ellipsoid_area(r, p=THOMSEN_P):
    """4*pi*((a^p b^p + b^p c^p + c^p a^p)/3)^(1/p)."""
    a, b, c = EllipsoidRadii.coerce(r)
    s = (a * b) ** p + (b * c) ** p + (c * a) ** p
    return 4 * np.pi * (s / 3) ** (1 / p)


def ellipsoid_area_grad(r, p=THOMSEN_P):
    """Partial derivatives of :func:`ellipsoid_area` with respect to (a, b, c)."""
    a, b, c = EllipsoidRadii.coerce(r)
    s = (a * b) ** p + (b * c) ** p + (c * a) ** p
    k = 4 * np.pi / 3 ** (1 / p) * s ** (1 / p - 1)
    return np.array([
        k * a ** (p - 1) * (b ** p + c ** p),
        k * b ** (p - 1) * (a ** p + c ** p),
        k * c ** (p - 1) * (a ** p + b ** p),
    ])


def ellipsoid_residual(points, r):
    """(x/a)^2 + (y/b)^2 + (z/c)^2 - 1 per point."""
    a, b, c = EllipsoidRadii.coerce(r)
    q = np.asarray(points, dtype=float).reshape(-1, 3) / np.array([a, b, c])
    return (q ** 2).sum(1) - 1


def ellipsoid_normals(points, r):
    """Outward (unnormalized) normals, the gradient of the implicit function."""
    a, b, c = EllipsoidRadii.coerce(r)
    return np.asarray(points, dtype=float).reshape(-1, 3) / np.array([a * a, b * b, c * c])
