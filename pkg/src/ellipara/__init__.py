"""Conformal and landmark-matching quasi-conformal maps of genus-0 meshes onto ellipsoids."""

from .fecm import ParamResult, PoleSpec, RadiiTrace, StageError, fecm, optimize_radii
from .feqcm import LandmarkSet, feqcm, load_landmarks
from .mesh import MeshError, TriMesh, load_mesh, write_mesh
from .metrics import DistortionReport, build_report, read_report
from .projections import EllipsoidRadii
from .spherical import spherical_param

__all__ = [
    "DistortionReport", "EllipsoidRadii", "LandmarkSet", "MeshError", "ParamResult",
    "PoleSpec", "RadiiTrace", "StageError", "TriMesh", "build_report", "fecm", "feqcm",
    "load_landmarks", "load_mesh", "optimize_radii", "read_report", "spherical_param",
    "write_mesh",
]
