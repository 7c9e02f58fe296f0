"""Optimal-transport r-adaptation of high-order quadrilateral meshes."""

from .geometry import BoundaryGeometry, LineSegment, ArcSegment
from .master_element import MasterElement, build_master
from .mesh import Mesh, InvalidMesh, validate
from .fields import ScalarFieldDG, StateFieldDG
from .monitor import MonitorConfig, AnalyticDensity, build_density
from .monge_ampere import MAParams, MASolution, fixed_point_solve, extract_adapted_mesh, corner_fix
from .config import AdaptConfig, load_config
from .driver import run_adaptation

__version__ = "0.1.0"
