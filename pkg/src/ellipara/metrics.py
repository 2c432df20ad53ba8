"""Distortion measurements and machine-readable reports."""

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .beltrami import mu_surface_map
from .mesh import face_areas

log = logging.getLogger(__name__)

SCHEMA = "ellipara-report/1"
MU_BINS = (0.0, 1.0, 0.02)
DAREA_BINS = (-8.0, 8.0, 0.1)


def area_distortion(mesh, param, faces=None, normalizer=None):
    """log((|f(T)| / sum |f|) / (|T| / sum |T|)) per face.

    ``normalizer`` replaces the summed image area (the optimizer passes the
    ellipsoid surface area).  Faces with zero area on either side give NaN.
    """
    f = np.asarray(mesh.faces if faces is None else faces)
    src = face_areas(mesh.vertices, f)
    img = face_areas(np.asarray(getattr(param, "vertices", param)), f)
    total = img.sum() if normalizer is None else normalizer
    bad = (src <= 0) | (img <= 0)
    if np.any(bad):
        log.warning("area distortion: %d zero-area faces excluded", int(bad.sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.log((img / total) / (src / src.sum()))
    d[bad] = np.nan
    return d


def histogram(values, lo, hi, step):
    """Counts on fixed bins ``[lo, hi]``; out-of-range values land in the end bins."""
    n = int(round((hi - lo) / step))
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    idx = np.clip(np.floor((v - lo) / step).astype(np.int64), 0, n - 1)
    return np.bincount(idx, minlength=n)


@dataclass
class MuStats:
    mean: float
    sd: float
    histogram: np.ndarray
    inadmissible: int


def mu_stats(mesh, param, faces=None):
    """Mean, SD and histogram of |mu| over admissible faces of mesh -> param."""
    f = mesh.faces if faces is None else faces
    m = np.abs(mu_surface_map(mesh.vertices, getattr(param, "vertices", param), f).mu)
    ok = np.isfinite(m) & (m < 1)
    good = m[ok]
    return MuStats(float(good.mean()) if good.size else float("nan"),
                   float(good.std()) if good.size else float("nan"),
                   histogram(good, *MU_BINS), int((~ok).sum()))


def landmark_error(positions, landmarks, targets=None):
    """Mean Euclidean distance between landmark images and their targets.

    ``landmarks`` is either a ``LandmarkSet`` or an index array with
    ``targets`` given separately.
    """
    if targets is None:
        idx, targets = landmarks.indices, landmarks.targets
    else:
        idx = landmarks
    p = np.asarray(getattr(positions, "positions", positions))[np.asarray(idx)]
    return float(np.linalg.norm(p - np.asarray(targets, dtype=float), axis=1).mean())


def _nanstats(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if not x.size:
        return float("nan"), float("nan")
    return float(x.mean()), float(x.std())


@dataclass
class DistortionReport:
    """Per-face distortion lists with their summary statistics.

    Means and standard deviations (population, ddof = 0) are always
    recomputed from the stored lists.
    """

    mu_abs: np.ndarray
    d_area: np.ndarray
    foldovers: int
    radii: tuple
    landmark_error: float | None = None
    timings: dict = field(default_factory=dict)
    radii_trace: list = field(default_factory=list)
    command: str = ""

    def __post_init__(self):
        self.mu_abs = np.asarray(self.mu_abs, dtype=float)
        self.d_area = np.asarray(self.d_area, dtype=float)
        self.radii = tuple(float(r) for r in self.radii)

    @property
    def n_faces(self):
        return len(self.mu_abs)

    @property
    def mu_inadmissible(self):
        return int(np.sum(~np.isfinite(self.mu_abs) | (self.mu_abs >= 1)))

    @property
    def mu_mean(self):
        ok = np.isfinite(self.mu_abs) & (self.mu_abs < 1)
        return _nanstats(self.mu_abs[ok])[0]

    @property
    def mu_sd(self):
        ok = np.isfinite(self.mu_abs) & (self.mu_abs < 1)
        return _nanstats(self.mu_abs[ok])[1]

    @property
    def d_area_abs_mean(self):
        return _nanstats(np.abs(self.d_area))[0]

    @property
    def d_area_abs_sd(self):
        return _nanstats(np.abs(self.d_area))[1]

    def mu_histogram(self):
        ok = np.isfinite(self.mu_abs) & (self.mu_abs < 1)
        return histogram(self.mu_abs[ok], *MU_BINS)

    def d_area_histogram(self):
        return histogram(self.d_area, *DAREA_BINS)

    def summary(self):
        out = {
            "n_faces": self.n_faces,
            "mu_mean": self.mu_mean,
            "mu_sd": self.mu_sd,
            "mu_inadmissible": self.mu_inadmissible,
            "d_area_abs_mean": self.d_area_abs_mean,
            "d_area_abs_sd": self.d_area_abs_sd,
            "foldovers": int(self.foldovers),
            "radii": list(self.radii),
        }
        if self.landmark_error is not None:
            out["landmark_error"] = self.landmark_error
        return out


def build_report(mesh, positions, radii, foldovers, faces=None, **extra):
    """Measure |mu| and d_area of the map mesh -> positions."""
    f = mesh.faces if faces is None else faces
    mu = np.abs(mu_surface_map(mesh.vertices, positions, f).mu)
    d = area_distortion(mesh, positions, f)
    return DistortionReport(mu, d, int(foldovers), tuple(radii), **extra)


def _num(x):
    """JSON-safe float: NaN and infinities become None."""
    x = float(x)
    return x if np.isfinite(x) else None


def _unnum(x):
    return float("nan") if x is None else float(x)


def report_to_dict(report):
    out = {"schema": SCHEMA}
    if report.command:
        out["command"] = report.command
    out["summary"] = {k: (_num(v) if isinstance(v, float) else v) for k, v in report.summary().items()}
    out["histograms"] = {
        "mu_abs": {"lo": MU_BINS[0], "hi": MU_BINS[1], "step": MU_BINS[2],
                   "counts": report.mu_histogram().tolist()},
        "d_area": {"lo": DAREA_BINS[0], "hi": DAREA_BINS[1], "step": DAREA_BINS[2],
                   "counts": report.d_area_histogram().tolist()},
    }
    if report.radii_trace:
        out["radii_trace"] = [{"a": a, "b": b, "c": c, "E_area": e} for a, b, c, e in report.radii_trace]
    if report.timings:
        out["timings"] = {k: float(v) for k, v in report.timings.items()}
    out["faces"] = {"mu_abs": [_num(v) for v in report.mu_abs],
                    "d_area": [_num(v) for v in report.d_area]}
    return out


def report_from_dict(d):
    if d.get("schema") != SCHEMA:
        raise ValueError(f"unsupported report schema {d.get('schema')!r}")
    s = d["summary"]
    trace = [(t["a"], t["b"], t["c"], t["E_area"]) for t in d.get("radii_trace", [])]
    return DistortionReport(
        mu_abs=[_unnum(v) for v in d["faces"]["mu_abs"]],
        d_area=[_unnum(v) for v in d["faces"]["d_area"]],
        foldovers=s["foldovers"], radii=s["radii"],
        landmark_error=s.get("landmark_error"),
        timings=dict(d.get("timings", {})), radii_trace=trace,
        command=d.get("command", ""))


def _csv_text(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["face", "mu_abs", "d_area"])
    for i, (m, a) in enumerate(zip(report.mu_abs, report.d_area)):
        w.writerow([i, repr(float(m)), repr(float(a))])
    w.writerow([])
    w.writerow(["# summary"])
    w.writerow(["schema", SCHEMA])
    if report.command:
        w.writerow(["command", report.command])
    for k, v in report.summary().items():
        if k == "radii":
            w.writerow([k] + [repr(x) for x in v])
        else:
            w.writerow([k, repr(v)])
    for a, b, c, e in report.radii_trace:
        w.writerow(["radii_trace", repr(a), repr(b), repr(c), repr(e)])
    for k, v in report.timings.items():
        w.writerow(["timing", k, repr(float(v))])
    return buf.getvalue()


def _parse_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["face", "mu_abs", "d_area"]:
        raise ValueError("not an ellipara CSV report")
    mu, da = [], []
    i = 1
    while i < len(rows) and rows[i]:
        mu.append(float(rows[i][1]))
        da.append(float(rows[i][2]))
        i += 1
    meta = {"timings": {}, "radii_trace": []}
    for row in rows[i + 2:]:
        key = row[0]
        if key == "radii":
            meta["radii"] = [float(x) for x in row[1:]]
        elif key == "radii_trace":
            meta["radii_trace"].append(tuple(float(x) for x in row[1:]))
        elif key == "timing":
            meta["timings"][row[1]] = float(row[2])
        else:
            meta[key] = row[1]
    if meta.get("schema") != SCHEMA:
        raise ValueError(f"unsupported report schema {meta.get('schema')!r}")
    lm = meta.get("landmark_error")
    return DistortionReport(mu, da, int(meta["foldovers"]), meta["radii"],
                            landmark_error=None if lm is None else float(lm),
                            timings=meta["timings"], radii_trace=meta["radii_trace"],
                            command=meta.get("command", ""))


def report_text(report, fmt="json"):
    if fmt == "json":
        return json.dumps(report_to_dict(report), indent=1) + "\n"
    if fmt == "csv":
        return _csv_text(report)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report, path, fmt="json"):
    with open(path, "w", newline="") as fh:
        fh.write(report_text(report, fmt))


def read_report(path, fmt=None):
    with open(path) as fh:
        text = fh.read()
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "csv"
    if fmt == "json":
        return report_from_dict(json.loads(text))
    return _parse_csv(text)
