"""Finite-volume flow solver with observer-driven ghost-cell immersed boundaries."""

__version__ = "0.1.0"

from .grid import FLUID, GHOST, SOLID, FieldSet, RectilinearGrid, build_grid
from .geometry import Circle, Naca4, Polygon2D, Sphere, StencilTable, \
    build_ghost_links, channel_walls_polygon, classify
from .observer import ADIABATIC, ISOTHERMAL, ObserverParams, ObserverState
from .incompressible import BlowupError, PisoConfig, PisoSolver
from .compressible import CompressibleConfig, CompressibleSolver, GasModel, \
    PositivityError, freestream_bc
from .config import CaseConfig, ConfigError, load_case, parse_config
from .post import CoefficientSeries, Panels, Reference, force_coefficients, \
    nusselt, panelize, strouhal, surface_sample, wall_profiles
from .runner import ProvenanceError, Runner
from .vtk_io import write_snapshot

__all__ = [
    "FLUID", "GHOST", "SOLID", "FieldSet", "RectilinearGrid", "build_grid",
    "Circle", "Naca4", "Polygon2D", "Sphere", "StencilTable",
    "build_ghost_links", "channel_walls_polygon", "classify",
    "ADIABATIC", "ISOTHERMAL", "ObserverParams", "ObserverState",
    "BlowupError", "PisoConfig", "PisoSolver",
    "CompressibleConfig", "CompressibleSolver", "GasModel",
    "PositivityError", "freestream_bc",
    "CaseConfig", "ConfigError", "load_case", "parse_config",
    "CoefficientSeries", "Panels", "Reference", "force_coefficients",
    "nusselt", "panelize", "strouhal", "surface_sample", "wall_profiles",
    "ProvenanceError", "Runner", "write_snapshot",
]
