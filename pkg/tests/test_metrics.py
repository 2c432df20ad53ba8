import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ellipara import shapes
from ellipara.mesh import TriMesh
from ellipara.metrics import (DAREA_BINS, MU_BINS, SCHEMA, DistortionReport, area_distortion,
                              build_report, emit_report, histogram, landmark_error, mu_stats,
                              read_report, report_text)
from ellipara.projections import inv_stereographic


def _random_rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q if np.linalg.det(q) > 0 else -q


def test_area_distortion_identity_and_scale():
    m = shapes.radial_blob(6)
    assert np.abs(area_distortion(m, m.vertices)).max() < 1e-12
    assert np.abs(area_distortion(m, 2 * m.vertices)).max() < 1e-12


def test_area_distortion_two_faces():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2], [1, 3, 2]])
    img = m.vertices.copy()
    img[0] = [-1, -1, 0]   # first face area 1/2 -> 3/2, second unchanged
    d = area_distortion(m, img)
    # areas 3/2 and 1/2 against 1/2 and 1/2: log((3/4)/(1/2)) and log((1/4)/(1/2))
    np.testing.assert_allclose(d, [np.log(1.5), np.log(0.5)], atol=1e-14)
    img2 = m.vertices.copy()
    img2[0] = [-1, 0, 0]   # first face doubled: areas 1, 1/2
    assert area_distortion(m, img2)[0] == pytest.approx(np.log(4 / 3), abs=1e-14)


def test_zero_area_faces_are_nan(caplog):
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2], [1, 3, 2]])
    img = m.vertices.copy()
    img[3] = [0.5, 0.5, 0]
    d = area_distortion(m, img)
    assert np.isnan(d[1]) and np.isfinite(d[0])


def test_mu_stats_identity_and_stretch():
    m = shapes.icosphere(3)
    s = mu_stats(m, m.vertices)
    assert s.mean < 1e-12 and s.sd < 1e-12
    assert s.histogram.sum() == m.n_faces


def test_planar_stretch_mu():
    z, f, _ = shapes.planar_grid(8)
    m = TriMesh(np.column_stack([z.real, z.imag, np.zeros(len(z))]), f)
    s = mu_stats(m, m.vertices * [2, 1, 1])
    assert s.mean == pytest.approx(1 / 3, abs=0.02)


def test_conformal_disk_mu_decreases():
    means = []
    for rings in (4, 8, 16):
        z, f, _ = shapes.planar_disk(rings)
        m = TriMesh(np.column_stack([z.real, z.imag, np.zeros(len(z))]), f)
        means.append(mu_stats(m, inv_stereographic(z)).mean)
    assert means[0] > means[1] > means[2]
    assert means[-1] <= 0.05


def test_rigid_invariance(rng):
    m = shapes.radial_blob(6)
    param = inv_stereographic(m.vertices[:, 0] + 1j * m.vertices[:, 1])
    base = build_report(m, param, (1, 1, 1), 0)
    q1, q2 = _random_rotation(rng), _random_rotation(rng)
    moved = TriMesh(m.vertices @ q1.T + 3, m.faces)
    other = build_report(moved, param @ q2.T - 1, (1, 1, 1), 0)
    np.testing.assert_allclose(other.mu_abs, base.mu_abs, atol=1e-12)
    np.testing.assert_allclose(other.d_area, base.d_area, atol=1e-12)


def test_landmark_error():
    p = np.zeros((3, 3))
    assert landmark_error(p, [0, 1], np.zeros((2, 3))) == 0
    assert landmark_error(p, [2], [[0.3, 0, 0]]) == pytest.approx(0.3)
    assert landmark_error(p, [0, 1], [[0.1, 0, 0], [0, 0.3, 0]]) == pytest.approx(0.2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=200))
def test_histogram_conserves_counts(values):
    assert histogram(values, *DAREA_BINS).sum() == len(values)
    assert len(histogram(values, *MU_BINS)) == 50


def _sample_report():
    rng = np.random.default_rng(4)
    mu = rng.uniform(0, 0.3, 40)
    mu[3] = np.inf
    d = rng.normal(0, 0.5, 40)
    d[7] = np.nan
    return DistortionReport(mu, d, 0, (1.0, 1.2, 0.8), landmark_error=0.05,
                            radii_trace=[(1.0, 1.0, 1.0, 0.2), (1.0, 1.2, 0.8, 0.1)],
                            command="ellipsoid")


def test_summary_recomputed_from_lists():
    rep = _sample_report()
    ok = np.isfinite(rep.mu_abs) & (rep.mu_abs < 1)
    assert rep.mu_mean == pytest.approx(rep.mu_abs[ok].mean(), abs=1e-12)
    assert rep.mu_sd == pytest.approx(rep.mu_abs[ok].std(), abs=1e-12)
    assert rep.mu_inadmissible == 1
    assert rep.d_area_abs_mean == pytest.approx(np.nanmean(np.abs(rep.d_area)), abs=1e-12)
    assert rep.mu_histogram().sum() + rep.mu_inadmissible == rep.n_faces


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_round_trip_bytes(tmp_path, fmt):
    rep = _sample_report()
    a = tmp_path / f"a.{fmt}"
    b = tmp_path / f"b.{fmt}"
    emit_report(rep, a, fmt)
    back = read_report(a)
    emit_report(back, b, fmt)
    assert a.read_bytes() == b.read_bytes()
    assert back.summary()["mu_mean"] == pytest.approx(rep.mu_mean, abs=1e-12)


def test_csv_layout():
    rep = _sample_report()
    lines = report_text(rep, "csv").splitlines()
    assert lines[0] == "face,mu_abs,d_area"
    assert lines[rep.n_faces + 1] == ""
    assert lines[rep.n_faces + 2] == "# summary"


def test_json_schema():
    d = json.loads(report_text(_sample_report()))
    assert d["schema"] == SCHEMA
    assert set(d["summary"]) >= {"mu_mean", "mu_sd", "d_area_abs_mean", "d_area_abs_sd",
                                 "foldovers", "radii", "landmark_error"}
    assert d["faces"]["mu_abs"][3] is None
    with pytest.raises(ValueError):
        report_text(_sample_report(), "xml")
