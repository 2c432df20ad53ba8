import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ellipara.projections import (INF, EllipsoidRadii, MobiusAlignment, balance_factor,
                                  ellip_stereographic, ellipsoid_area, ellipsoid_area_grad,
                                  ellipsoid_residual, face_mu_average, inv_ellip_stereographic,
                                  inv_stereographic, is_inf, mobius_align, mu_inv_ellip,
                                  polygon_perimeter, pole_swap, stereographic)

finite = st.floats(-50, 50, allow_nan=False)

# mu of the inverse ellipsoidal projection, evaluated with sympy from the
# symbolic first fundamental form of the chart (30-digit arithmetic)
MU_ORACLE = [
    (0.3 + 0.4j, (2, 1, 1.5), 0.18899702038660557 - 0.022119641659313564j),
    (1.7 - 0.6j, (1, 1.5, 3), 0.23722367298668037 - 0.15888764696607197j),
    (-0.2 + 2.5j, (3, 2, 1), 0.29242766485723776 + 0.07465131522837568j),
]


def test_stereographic_examples():
    assert stereographic([0, 0, -1]) == 0
    assert stereographic([1, 0, 0]) == 1
    assert is_inf(stereographic([0, 0, -1], pole="south"))
    np.testing.assert_allclose(inv_stereographic(0), [0, 0, -1])
    np.testing.assert_allclose(inv_stereographic(INF), [0, 0, 1])
    np.testing.assert_allclose(inv_stereographic(1), [1, 0, 0], atol=1e-16)


def test_pole_swap():
    assert pole_swap(2) == 0.5
    assert pole_swap(1) == 1
    assert is_inf(pole_swap(0))
    assert pole_swap(INF) == 0


@settings(max_examples=200, deadline=None)
@given(finite, finite)
def test_pole_swap_involution(x, y):
    z = complex(x, y)
    if z == 0:
        return
    assert abs(pole_swap(pole_swap(z)) - z) <= 1e-13 * max(1, abs(z))


@settings(max_examples=200, deadline=None)
@given(finite, finite, st.sampled_from(["north", "south"]))
def test_stereographic_round_trip(x, y, pole):
    z = complex(x, y)
    p = inv_stereographic(z, pole)
    assert abs(np.linalg.norm(p) - 1) < 1e-13
    assert abs(stereographic(p, pole) - z) <= 1e-9 * max(1, abs(z)) ** 2


def test_north_south_relation():
    z = np.array([0.3 + 0.2j, -2 + 1j, 5j])
    p = inv_stereographic(z)
    np.testing.assert_allclose(stereographic(p, "south"), pole_swap(z), rtol=1e-13)


def test_mobius_alignment():
    z0, z1, z2 = 0.3 + 0.1j, -1.2 + 0.7j, 2 - 1j
    m = MobiusAlignment.from_points(z0, z1, z2)
    assert abs(mobius_align(z0, m)) == 0
    assert is_inf(mobius_align(z1, m))
    w = mobius_align(z2, m)
    assert w.real > 0 and abs(np.angle(w)) < 1e-12
    assert -np.pi <= m.theta < np.pi
    with pytest.raises(ValueError):
        MobiusAlignment.from_points(1, 1, 2)


def test_ellipsoidal_projection_examples():
    r = (2.0, 1.0, 3.0)
    assert ellip_stereographic([0, 0, -3], r) == 0
    assert ellip_stereographic([2, 0, 0], r) == 1
    assert ellip_stereographic([0, 1, 0], r) == 1j
    assert is_inf(ellip_stereographic([0, 0, 3], r))
    np.testing.assert_allclose(inv_ellip_stereographic(0, r), [0, 0, -3])
    np.testing.assert_allclose(inv_ellip_stereographic(INF, r), [0, 0, 3])
    np.testing.assert_allclose(inv_ellip_stereographic(1, r), [2, 0, 0], atol=1e-15)


def test_sphere_specialisation(rng):
    p = rng.normal(size=(50, 3))
    p /= np.linalg.norm(p, axis=1)[:, None]
    np.testing.assert_allclose(ellip_stereographic(p, (1, 1, 1)), stereographic(p), rtol=1e-14)


@settings(max_examples=200, deadline=None)
@given(finite, finite, st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.2, 5))
def test_ellipsoidal_round_trip(x, y, a, b, c):
    z = complex(x, y)
    p = inv_ellip_stereographic(z, (a, b, c))
    assert abs(ellipsoid_residual(p, (a, b, c))[0]) < 1e-12
    back = ellip_stereographic(p, (a, b, c))
    assert abs(back - z) <= 1e-9 * max(1, abs(z)) ** 2


def test_huge_inputs_do_not_overflow():
    p = inv_ellip_stereographic(np.array([1e200 + 1e200j]), (2, 1, 3))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p[0], [0, 0, 3], atol=1e-12)


def test_mu_inv_ellip_examples():
    assert mu_inv_ellip(0, (2, 1, 7)) == pytest.approx(1 / 3, abs=1e-12)
    assert mu_inv_ellip(0, (2, 1, 0.3)) == pytest.approx(1 / 3, abs=1e-12)
    assert abs(mu_inv_ellip(0, (1, 1, 5))) < 1e-15
    z = np.array([0.2, 1 + 1j, -3j, 40 + 7j])
    assert np.abs(mu_inv_ellip(z, (1.3, 1.3, 1.3))).max() < 1e-14


@pytest.mark.parametrize("z, r, expected", MU_ORACLE)
def test_mu_inv_ellip_oracle(z, r, expected):
    assert abs(mu_inv_ellip(z, r) - expected) < 1e-13


def test_mu_inv_ellip_rejects_infinity():
    with pytest.raises(ValueError):
        mu_inv_ellip(np.array([INF]), (2, 1, 1))


def test_face_average():
    assert face_mu_average(np.zeros(3)) == 0
    assert face_mu_average(np.full(3, 0.3)) == pytest.approx(0.3)
    v = np.array([0.1 + 0j, 0.2 + 0.3j, 0.3j])
    assert face_mu_average(v) == pytest.approx(0.1 + 0.2j)
    assert face_mu_average(v, np.array([[0, 1, 2]]))[0] == pytest.approx(0.1 + 0.2j)


def test_thomsen_area():
    assert ellipsoid_area((1, 1, 1)) == pytest.approx(4 * np.pi, rel=1e-15)
    # 30-digit mpmath evaluation and numerical derivative of the same formula
    assert ellipsoid_area((1.7, 0.9, 1.3)) == pytest.approx(20.9945903320621957, rel=1e-14)
    np.testing.assert_allclose(ellipsoid_area_grad((1.7, 0.9, 1.3)),
                               [10.0278873907567372, 11.1361234942826923, 11.4763545807565495],
                               rtol=1e-13)
    assert ellipsoid_area_grad((1, 1, 1))[0] == pytest.approx(8 * np.pi / 3, rel=1e-14)


def test_thomsen_gradient_fd():
    r = np.array([1.7, 0.9, 1.3])
    h = 1e-6
    fd = [(ellipsoid_area(r + h * e) - ellipsoid_area(r - h * e)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(ellipsoid_area_grad(r), fd, rtol=1e-6)


def test_radii_validation():
    with pytest.raises(ValueError):
        EllipsoidRadii(1, 0, 1)
    with pytest.raises(ValueError):
        EllipsoidRadii(1, np.nan, 1)


def _equilateral(circumradius):
    return circumradius * np.exp(2j * np.pi * np.arange(3) / 3)


def test_balance_factor():
    square = np.array([0, 1, 1 + 1j, 1j])  # perimeter 4
    # inversion maps the circumcircle radius R to 1/R, so 3 sqrt(3) / R = 1
    south = _equilateral(3 * np.sqrt(3))
    assert polygon_perimeter(pole_swap(south)) == pytest.approx(1, rel=1e-15)
    assert balance_factor(square, south) == pytest.approx(0.5, rel=1e-15)
    assert balance_factor(_equilateral(1.0), _equilateral(1.0)) == pytest.approx(1, rel=1e-15)


def test_balance_factor_degenerate():
    with pytest.raises(ValueError):
        balance_factor(np.zeros(3), _equilateral(1.0))
