"""Command-line entry point: ``ellipara {sphere,ellipsoid,landmark,metrics}``.

Exit codes: 0 success, 1 usage error, 2 topology rejection, 3 numerical
failure (the failing stage is named on stderr).
"""

import argparse
import logging
import os
import sys

import numpy as np

from .beltrami import count_foldovers
from .fecm import AUTO, PoleSpec, StageError, fecm, optimize_radii, outward_faces
from .feqcm import BOUND, BijectivityError, LandmarkError, feqcm, load_landmarks
from .lbs import LBSError, NonAdmissibleError
from .mesh import MeshError, TriMesh, load_mesh, validate_topology, write_mesh
from .metrics import build_report, emit_report, landmark_error
from .projections import EllipsoidRadii

log = logging.getLogger("ellipara")

EXIT_OK, EXIT_USAGE, EXIT_TOPOLOGY, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class TopologyRejected(Exception):
    pass


def parse_radii(text):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"radii must be a,b,c decimals, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("radii need exactly three values a,b,c")
    if not all(np.isfinite(v) and v > 0 for v in vals):
        raise argparse.ArgumentTypeError("radii must be positive")
    return tuple(vals)


def _vertex(text):
    if text == AUTO:
        return AUTO
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a vertex index or 'auto', got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("vertex indices are non-negative")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="ellipara",
                                description="Ellipsoidal parameterization of genus-0 triangle meshes.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output=True):
        sp.add_argument("--in", dest="input", required=True, help="input mesh (OBJ, OFF or PLY)")
        if output:
            sp.add_argument("--out", help="parameterized mesh to write")
        sp.add_argument("--report", help="distortion report path")
        sp.add_argument("--report-format", choices=("json", "csv"), default=None,
                        help="default: from the report file extension, else json")
        sp.add_argument("--timings", action="store_true",
                        help="include wall-clock stage timings in the report")

    def poles(sp):
        sp.add_argument("--north", type=_vertex, default=AUTO)
        sp.add_argument("--south", type=_vertex, default=AUTO)
        sp.add_argument("--align", type=_vertex, default=AUTO)

    sp = sub.add_parser("sphere", help="conformal map onto the unit sphere")
    common(sp)
    poles(sp)

    sp = sub.add_parser("ellipsoid", help="conformal-as-possible map onto an ellipsoid")
    common(sp)
    poles(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--radii", type=parse_radii, help="a,b,c")
    g.add_argument("--optimize-radii", action="store_true",
                   help="choose radii minimising the area distortion energy")
    sp.add_argument("--init-radii", type=parse_radii, help="optimizer start (default: bounding box)")
    sp.add_argument("--gamma0", type=_positive, default=0.1)
    sp.add_argument("--max-iters", type=int, default=50)
    sp.add_argument("--tol", type=_positive, default=1e-6)

    sp = sub.add_parser("landmark", help="landmark-matching quasi-conformal map onto an ellipsoid")
    common(sp)
    poles(sp)
    sp.add_argument("--radii", type=parse_radii, required=True)
    sp.add_argument("--landmarks", required=True, help="CSV rows vertex_index,qx,qy,qz")
    sp.add_argument("--lambda", dest="lam", type=_positive, default=1.0)
    sp.add_argument("--bound", type=float, default=BOUND, help="|mu| bound of the landmark deformation")
    sp.add_argument("--max-rounds", type=int, default=10)
    sp.add_argument("--direct-lift", action="store_true",
                    help="lift landmark targets without the psi compensation")

    sp = sub.add_parser("metrics", help="distortion report of an existing parameterization")
    common(sp, output=False)
    sp.add_argument("--param", required=True, help="parameterized mesh with the same faces")
    sp.add_argument("--radii", type=parse_radii,
                    help="ellipsoid of the parameterization (default: its coordinate extents)")
    sp.add_argument("--landmarks", help="optional landmark CSV for the landmark error")
    return p


def _report_format(args):
    if args.report_format:
        return args.report_format
    return "csv" if args.report and args.report.lower().endswith(".csv") else "json"


def _write_outputs(args, mesh, result):
    if getattr(args, "out", None):
        write_mesh(TriMesh(result.positions, mesh.faces), args.out)
    if args.report and result.report is not None:
        rep = result.report
        rep.command = args.command
        if not args.timings:
            rep.timings = {}
        else:
            rep.timings = dict(result.timings)
        emit_report(rep, args.report, _report_format(args))


def _spec(args):
    return PoleSpec(args.north, args.south, args.align)


def _check_topology(mesh):
    rep = validate_topology(mesh)
    if not rep.is_sphere:
        raise TopologyRejected(f"expected a genus-0 closed oriented mesh, got {rep.describe()}")


def run_sphere(args, mesh):
    res = fecm(mesh, (1.0, 1.0, 1.0), _spec(args))
    _write_outputs(args, mesh, res)
    return res


def run_ellipsoid(args, mesh):
    if args.optimize_radii:
        res, _ = optimize_radii(mesh, _spec(args), r0=args.init_radii, gamma0=args.gamma0,
                                max_iters=args.max_iters, tol=args.tol)
    else:
        if args.init_radii is not None:
            raise UsageError("--init-radii only applies with --optimize-radii")
        res = fecm(mesh, args.radii, _spec(args))
    _write_outputs(args, mesh, res)
    return res


def run_landmark(args, mesh):
    lm = load_landmarks(args.landmarks, args.lam)
    res = feqcm(mesh, args.radii, lm, _spec(args), bound=args.bound, max_rounds=args.max_rounds,
                compensate=not args.direct_lift)
    _write_outputs(args, mesh, res)
    return res


def run_metrics(args, mesh):
    param = load_mesh(args.param)
    if param.n_vertices != mesh.n_vertices or not np.array_equal(param.faces, mesh.faces):
        raise UsageError("--param must share the input mesh's connectivity")
    if args.radii is not None:
        r = EllipsoidRadii(*args.radii)
    else:
        r = EllipsoidRadii(*np.abs(param.vertices).max(0))
    f = outward_faces(mesh)
    folds = count_foldovers(f, param.vertices, r)
    extra = {}
    if args.landmarks:
        lm = load_landmarks(args.landmarks)
        extra["landmark_error"] = landmark_error(param.vertices, lm)
    rep = build_report(mesh, param.vertices, tuple(r), folds, f, **extra)
    rep.command = args.command
    if args.report:
        emit_report(rep, args.report, _report_format(args))
    else:
        sys.stdout.write(_summary_line(rep) + "\n")
    return None


def _summary_line(rep):
    s = rep.summary()
    parts = [f"mu_mean={s['mu_mean']:.6g}", f"d_area_abs_mean={s['d_area_abs_mean']:.6g}",
             f"foldovers={s['foldovers']}"]
    if "landmark_error" in s:
        parts.append(f"landmark_error={s['landmark_error']:.6g}")
    return " ".join(parts)


COMMANDS = {"sphere": run_sphere, "ellipsoid": run_ellipsoid,
            "landmark": run_landmark, "metrics": run_metrics}


def _thread_limit():
    val = os.environ.get("ELLIPARA_THREADS")
    if not val:
        return None
    try:
        n = int(val)
    except ValueError:
        raise UsageError(f"ELLIPARA_THREADS must be an integer, got {val!r}") from None
    if n < 1:
        raise UsageError("ELLIPARA_THREADS must be at least 1")
    return n


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _thread_limit()
        mesh = load_mesh(args.input)
        _check_topology(mesh)
        if threads is None:
            res = COMMANDS[args.command](args, mesh)
        else:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                res = COMMANDS[args.command](args, mesh)
    except UsageError as exc:
        print(f"ellipara: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LandmarkError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"ellipara: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TopologyRejected as exc:
        print(f"ellipara: topology rejected: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except MeshError as exc:
        print(f"ellipara: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"ellipara: numerical failure in stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BijectivityError as exc:
        print(f"ellipara: numerical failure in stage 'bijectivity enforcement': {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LBSError, NonAdmissibleError, ArithmeticError) as exc:
        print(f"ellipara: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"ellipara: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if res is not None and res.foldovers:
        print(f"ellipara: warning: {res.foldovers} fold-overs in the output", file=sys.stderr)
    return EXIT_OK


def main():
    sys.exit(run())
