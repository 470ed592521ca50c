"""Artificial spacetimes for reactive robots.

Intensity fields built from optical lens profiles and conformal maps, and
simulators that treat differential-drive robots as null geodesics of the
metric ``-I^2 dt^2 + dx^2 + dy^2``.
"""

from . import errors
from .domains import Disk, Plane, PolygonDomain, Rect
from .fields import (
    Clamp, Constant, Eaton, Fisheye, Grin, LensSpec, Linear, Patch, Placement, Product,
    Proportional, ScalarField, Transform, clamp, combine, make_expr, make_field, patch,
    product, transform,
)
from .conformal import (
    Affine, Chain, Exp, Identity, Inverse, Log, Moebius, Power, Pullback, map_from_dict,
    pullback, push_pose,
)
from .schwarz_christoffel import Polygon, SCMap, cached_solve, solve_parameters
from .fields3d import Constant3, Extruded, Linear3, Radial3
from .sim import (
    Pose3, RobotPose, SimOptions, Trajectory, fit_convergence, radial_diagnostics,
    simulate_geodesic2d, simulate_geodesic3d, simulate_many, simulate_robot,
    trajectory_diagnostics, turning_angle,
)
from .raster import RasterField, field_from_raster, rasterize, read_image, write_image
from .scene import load_demo, load_scene, parse_scene, run_scene

__version__ = "0.1.0"
