"""Five-axis finishing tool paths on parametric surfaces with kinematics-aware tilt optimisation."""

from .errors import (
    AxisSingularityError,
    ConfigError,
    DomainError,
    FrameError,
    GeometryError,
    LocatedError,
    MachSurfError,
    NoOverlapError,
    SingularGeometryError,
    UnreachablePoseError,
)
from .intersection import Plane, PlaneCurve, plane_intersection
from .kinematics import JointPose, MachineModel, PartPose, forward, inverse, inverse_path, relative_path_length
from .machining import CutterGeometry, OrientationField, axis_point, deform_field, field_tilt, guide_point, tool_axis
from .planner import (
    MachiningStrategy,
    ToolPath,
    effective_radius,
    generate,
    gouge_check,
    plan_planes,
    scallop_height,
    tighten,
)
from .simulator import (
    KinematicProfile,
    SaturationReport,
    effective_feedrate,
    inverse_time,
    joint_velocities,
    optimize_tilt,
    saturation,
    simulate,
)
from .surface import AnalyticSaddle, LocalFrame, PolynomialPatch, evaluate, local_frame, normal, normal_curvature

__version__ = "0.1.0"
