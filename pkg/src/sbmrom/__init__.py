"""Shifted boundary finite elements on a fixed background mesh and a POD-Galerkin
reduced order model for geometrically parametrized Poisson problems."""
from .assembly import FomSystem, ProblemData, assemble
from .geometry import AspectRectangle, Circle, FixedDisc, Rectangle, YCenterRectangle, make_shape
from .mesh import BackgroundMesh, Box, build_structured_mesh
from .pod import PodBasis, SnapshotSet, pod, project, reconstruct, solve_reduced
from .solver import convergence_study, solve
from .surrogate import GeometryError, SurrogateMap, classify

__version__ = "0.1.0"

__all__ = [
    "AspectRectangle",
    "BackgroundMesh",
    "Box",
    "Circle",
    "FixedDisc",
    "FomSystem",
    "GeometryError",
    "PodBasis",
    "ProblemData",
    "Rectangle",
    "SnapshotSet",
    "SurrogateMap",
    "YCenterRectangle",
    "assemble",
    "build_structured_mesh",
    "classify",
    "convergence_study",
    "make_shape",
    "pod",
    "project",
    "reconstruct",
    "solve",
    "solve_reduced",
]
