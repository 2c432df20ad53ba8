"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from ellipara import shapes
from ellipara.beltrami import mu_planar_faces, mu_surface_map
from ellipara.cli import run
from ellipara.fecm import (E_area, PoleSpec, fecm, grad_E_area, init_radii_bbox, link_ring,
                           optimize_radii, pole_frame, prepare, psi_inverse_stage)
from ellipara.feqcm import LandmarkSet, feqcm, write_landmarks
from ellipara.lbs import ConstraintSet, solve_lbs
from ellipara.mesh import write_mesh
from ellipara.projections import (inv_ellip_stereographic, mu_inv_ellip, pole_swap,
                                  polygon_perimeter)


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return report


def _apex_poles(mesh):
    v = mesh.vertices
    return PoleSpec(int(np.argmax(v[:, 2])), int(np.argmin(v[:, 2])), int(np.argmax(v[:, 0])))


def test_1_sphere_specialisation(ico4, verdict):
    t = time.perf_counter()
    res = fecm(ico4, (1, 1, 1))
    dt = time.perf_counter() - t
    rep = res.report
    ok = rep.mu_mean <= 0.01 and res.foldovers == 0 and rep.d_area_abs_mean <= 0.05 and dt <= 5
    assert verdict(1, ok, f"mean|mu|={rep.mu_mean:.4g} mean|d_area|={rep.d_area_abs_mean:.4g} "
                          f"foldovers={res.foldovers} time={dt:.2f}s")


def test_2_self_recovery(ellipsoid_mesh, verdict):
    res = fecm(ellipsoid_mesh, (2, 1, 1.5), _apex_poles(ellipsoid_mesh))
    rep = res.report
    ok = rep.mu_mean <= 0.02 and rep.d_area_abs_mean <= 0.15 and res.foldovers == 0
    assert verdict(2, ok, f"faces={ellipsoid_mesh.n_faces} mean|mu|={rep.mu_mean:.4g} "
                          f"mean|d_area|={rep.d_area_abs_mean:.4g} foldovers={res.foldovers}")


def test_3_analytic_mu(verdict):
    at_origin = [abs(mu_inv_ellip(0, (2, 1, c)) - 1 / 3) for c in (0.5, 1, 1.5, 7)]
    r = (2.0, 1.0, 1.5)
    devs = []
    for n in (16, 32, 64, 128):
        z, f, _ = shapes.planar_grid(n, -2, 2)
        mu = mu_surface_map(z, inv_ellip_stereographic(z, r), f).mu
        devs.append(float(np.abs(mu - mu_inv_ellip(z[f].mean(1), r)).max()))
    ok = max(at_origin) <= 1e-12 and devs[-1] <= 0.02 and all(b < a for a, b in zip(devs, devs[1:]))
    assert verdict(3, ok, f"origin error={max(at_origin):.2g} max deviation per level="
                          + ", ".join(f"{d:.4f}" for d in devs))


def test_4_perimeter_invariance(blob, blob_prepared, rng, verdict):
    north, south, _ = blob_prepared.poles
    p = blob_prepared.aligned
    N = p.z[link_ring(p.faces, north)]
    S = p.z[link_ring(p.faces, south)]
    ref = polygon_perimeter(N) * polygon_perimeter(pole_swap(S))
    drift = max(abs(polygon_perimeter(s * N) * polygon_perimeter(pole_swap(s * S)) - ref) / ref
                for s in rng.uniform(0.1, 10, 100))
    b = blob_prepared.balanced
    pn = polygon_perimeter(b.z[link_ring(b.faces, north)])
    ps = polygon_perimeter(pole_swap(b.z[link_ring(b.faces, south)]))
    gap = abs(pn - ps) / pn
    ok = drift <= 1e-10 and gap <= 1e-8
    assert verdict(4, ok, f"product drift={drift:.2g} post-balance gap={gap:.2g}")


def test_5_lbs_round_trip(verdict):
    z, f, b = shapes.planar_grid(24, jitter=0.2, seed=11)
    target = z + 0.2 * np.conj(z)
    affine = np.abs(solve_lbs(z, f, 0.2, ConstraintSet.pins(b, target[b])) - target).max()
    errs = []
    for zz, ff, bb in (shapes.planar_grid(24, jitter=0.2, seed=11), shapes.planar_disk(12)):
        w = zz + 0.25 * np.conj(zz) + 0.1 * zz ** 2 - 0.05j * zz * np.conj(zz)
        mu = mu_planar_faces(zz, w, ff).mu
        out = solve_lbs(zz, ff, mu, ConstraintSet.pins(bb, w[bb]))
        errs.append(float(np.abs(mu_planar_faces(zz, out, ff).mu - mu).mean()))
    ok = affine <= 1e-8 and max(errs) <= 1e-6
    assert verdict(5, ok, f"affine error={affine:.2g} mean mu error (grid, disk)="
                          + ", ".join(f"{e:.2g}" for e in errs))


def test_6_gradient(blob, blob_prepared, verdict):
    assert blob.n_faces >= 5000
    north, south, _ = blob_prepared.poles
    rng = np.random.default_rng(6)
    worst, slowest = 0.0, 0.0
    h = 1e-6
    for r in rng.uniform(0.6, 1.8, (5, 3)):
        stage = psi_inverse_stage(blob_prepared.balanced, r, north, south)
        t = time.perf_counter()
        g = grad_E_area(blob, stage, r)
        slowest = max(slowest, time.perf_counter() - t)
        fd = np.array([(E_area(blob, stage, r + h * e) - E_area(blob, stage, r - h * e)) / (2 * h)
                       for e in np.eye(3)])
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    ok = worst <= 1e-4 and slowest <= 2
    assert verdict(6, ok, f"max relative error={worst:.2g} slowest gradient={slowest:.3f}s")


def test_7_radii_optimisation(ellipsoid_mesh, verdict):
    res, trace = optimize_radii(ellipsoid_mesh, _apex_poles(ellipsoid_mesh), r0=(1, 1, 1))
    r = res.radii.as_array()
    truth = np.array([2, 1, 1.5])
    ratio = (r / r.sum()) / (truth / truth.sum())
    energies = [e for _, e in trace.steps]
    monotone = all(b <= a for a, b in zip(energies, energies[1:]))

    capsule = shapes.capsule(frequency=16, length=2.5)
    ext = np.ptp(capsule.vertices, axis=0)
    prep = prepare(capsule)
    r0 = init_radii_bbox(capsule, pole_frame(capsule, prep.poles))
    cres, ctrace = optimize_radii(capsule, r0=r0, prepared=prep)
    e0, e1 = ctrace.steps[0][1], ctrace.steps[-1][1]
    reduction = 1 - e1 / e0
    cmono = all(b <= a for a, b in zip([e for _, e in ctrace.steps], [e for _, e in ctrace.steps][1:]))
    ok = np.all(np.abs(ratio - 1) <= 0.15) and monotone and cmono and reduction >= 0.5
    assert verdict(7, ok, f"recovered radii={np.round(r, 4).tolist()} ratio to truth="
                          f"{np.round(ratio, 3).tolist()} monotone={monotone and cmono} "
                          f"elongated extent ratio={ext.max() / ext.min():.2f} "
                          f"E {e0:.4g}->{e1:.4g} reduction={reduction:.1%}")


def test_8_feqcm_trend(blob, blob_prepared, verdict):
    r = (1.0, 1.0, 1.5)
    base = fecm(blob, r, prepared=blob_prepared)
    rng = np.random.default_rng(8)
    north = blob_prepared.poles[0]
    idx = rng.choice(np.setdiff1d(np.arange(blob.n_vertices), [north]), 6, replace=False)
    d = rng.normal(size=(6, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    q = base.positions[idx] + 0.1 * blob.diameter() * d
    q /= np.sqrt(((q / np.array(r)) ** 2).sum(1))[:, None]
    errs, mus, folds = [], [], []
    for lam in (0.1, 1, 5, 10):
        res = feqcm(blob, r, LandmarkSet(idx, q, lam), prepared=blob_prepared)
        errs.append(res.landmark_error)
        mus.append(res.report.mu_mean)
        folds.append(res.foldovers)
    ok = (all(b < a for a, b in zip(errs, errs[1:])) and all(b >= a for a, b in zip(mus, mus[1:]))
          and not any(folds))
    assert verdict(8, ok, "error=" + ", ".join(f"{e:.4f}" for e in errs) + " mean|mu|="
                   + ", ".join(f"{m:.4f}" for m in mus) + f" foldovers={folds}")


def test_9_performance(tmp_path, verdict):
    script = (
        "import resource, time, json\n"
        "from ellipara import shapes\n"
        "from ellipara.fecm import fecm\n"
        "m = shapes.radial_blob(50)\n"
        "t = time.perf_counter()\n"
        "res = fecm(m, (1.0, 1.2, 1.6))\n"
        "dt = time.perf_counter() - t\n"
        "rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024\n"
        "print(json.dumps({'faces': m.n_faces, 'time': dt, 'rss': rss, 'folds': res.foldovers}))\n")
    out = subprocess.run([sys.executable, "-c", script], capture_output=True, text=True, check=True)
    d = json.loads(out.stdout.strip().splitlines()[-1])
    ok = d["faces"] >= 50000 and d["time"] <= 10 and d["rss"] <= 2 * 1024 ** 3 and d["folds"] == 0
    assert verdict(9, ok, f"faces={d['faces']} time={d['time']:.2f}s peak RSS={d['rss'] / 2 ** 20:.0f} MiB "
                          f"foldovers={d['folds']}")


def test_10_determinism(tmp_path, blob, verdict):
    write_mesh(blob, tmp_path / "blob.obj")
    base = fecm(blob, (1, 1, 1.5))
    north = prepare(blob).poles[0]
    idx = np.array([v for v in (17, 400, 1300, 2000) if v != north])
    q = base.positions[idx] + [0.1, 0.05, 0]
    q /= np.sqrt(((q / np.array([1, 1, 1.5])) ** 2).sum(1))[:, None]
    write_landmarks(tmp_path / "lm.csv", LandmarkSet(idx, q))
    commands = [
        ["ellipsoid", "--radii", "1,1.2,1.6"],
        ["ellipsoid", "--optimize-radii", "--max-iters", "3"],
        ["landmark", "--radii", "1,1,1.5", "--landmarks", str(tmp_path / "lm.csv"), "--lambda", "5"],
    ]
    same = []
    for k, cmd in enumerate(commands):
        runs = []
        for rep in range(2):
            o, r = tmp_path / f"o{k}_{rep}.obj", tmp_path / f"r{k}_{rep}.json"
            assert run(cmd + ["--in", str(tmp_path / "blob.obj"), "--out", str(o), "--report", str(r)]) == 0
            runs.append((o.read_bytes(), r.read_bytes()))
        same.append(runs[0] == runs[1])
    assert verdict(10, all(same), f"byte-identical outputs per command={same}")
