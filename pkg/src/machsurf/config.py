"""Job configuration: YAML text validated into typed settings with defaults."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .kinematics import MachineModel
from .machining import CutterGeometry
from .planner import MachiningStrategy
from .surface import AnalyticSaddle, PolynomialPatch, Surface


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SaddleSurface(_Block):
    type: Literal["saddle"] = "saddle"
    a: float = Field(50.0, gt=0)
    b: float = Field(50.0, gt=0)
    c: float = 20.0
    rotation: float = 0.0

    def build(self) -> Surface:
        return AnalyticSaddle(self.a, self.b, self.c, self.rotation)


class PlaneSurface(_Block):
    """Flat rectangle centred on the origin at height ``z``."""

    type: Literal["plane"]
    size: tuple[float, float] = (100.0, 100.0)
    z: float = 0.0

    def build(self) -> Surface:
        hx, hy = self.size[0] / 2, self.size[1] / 2
        net = [[[-hx, -hy, self.z], [-hx, hy, self.z]], [[hx, -hy, self.z], [hx, hy, self.z]]]
        return PolynomialPatch(np.array(net), degrees=(1, 1))


class BSplineSurface(_Block):
    type: Literal["bspline"]
    control_net: list[list[tuple[float, float, float]]]
    degrees: tuple[int, int] = (3, 3)

    def build(self) -> Surface:
        try:
            return PolynomialPatch(np.array(self.control_net, dtype=float), tuple(self.degrees))
        except ValueError as exc:
            raise ConfigError(f"surface: {exc}") from exc


SurfaceSpec = Annotated[Union[SaddleSurface, PlaneSurface, BSplineSurface], Field(discriminator="type")]


class ToolSpec(_Block):
    R: float = Field(9.0, gt=0)
    r: float = Field(1.0, ge=0)


class StrategySpec(_Block):
    plane_angle: float = 45.0
    stepover: float = Field(2.0, gt=0)
    chord_tol: float = Field(0.01, gt=0)
    max_sample_spacing: float = Field(1.0, gt=0)
    base_tilt: float = 1.0
    base_yaw: float = 0.0
    linking: Literal["zigzag", "one-way"] = "zigzag"
    field_spacing: float = Field(2.0, gt=0)


class VelocityLimits(_Block):
    X: float = Field(30000.0, gt=0)
    Y: float = Field(30000.0, gt=0)
    Z: float = Field(30000.0, gt=0)
    A: float = Field(15.0, gt=0)
    C: float = Field(20.0, gt=0)


Vec3 = tuple[float, float, float]
Range = tuple[float, float]


class MachineSpec(_Block):
    x_range: Range = (-1000.0, 1000.0)
    y_range: Range = (-1000.0, 1000.0)
    z_range: Range = (-1000.0, 1000.0)
    a_range: Range = (-30.0, 120.0)
    c_range: Optional[Range] = None
    velocity_limits: VelocityLimits = VelocityLimits()
    o_ca: Vec3 = (0.0, 0.0, 0.0)
    o_am: Vec3 = (0.0, 0.0, 0.0)
    setup_position: Vec3 = (0.0, 0.0, 0.0)
    setup_rotation: Vec3 = (0.0, 0.0, 0.0)
    singular_threshold: float = Field(0.1, ge=0)

    @field_validator("x_range", "y_range", "z_range", "a_range", "c_range")
    @classmethod
    def _ordered(cls, v):
        if v is not None and not v[0] < v[1]:
            raise ValueError("range must be (low, high) with low < high")
        return v


class OptimizationSpec(_Block):
    enabled: bool = True
    candidates: list[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 5.0, 8.0], min_length=1)
    scallop_tol: float = Field(0.002, gt=0)
    blend_halfwidth: tuple[int, int] = (1, 8)
    region_pad: int = Field(6, ge=0)
    max_iterations: int = Field(200, ge=0)

    @field_validator("candidates")
    @classmethod
    def _sorted(cls, v):
        if list(v) != sorted(v):
            raise ValueError("candidates must be sorted ascending")
        return v


class OutputSpec(_Block):
    dir: str = "out"
    stem: str = "job"
    cl_decimals: int = Field(6, ge=1, le=12)
    nc_decimals: int = Field(4, ge=1, le=12)
    feed_mode: Literal["inverse_time", "units_per_min"] = "inverse_time"
    retract: Optional[float] = None


class JobConfig(_Block):
    name: str = "job"
    surface: SurfaceSpec
    tool: ToolSpec
    feedrate: float = Field(gt=0, description="programmed feed, mm/min")
    strategy: StrategySpec = StrategySpec()
    machine: MachineSpec = MachineSpec()
    optimization: OptimizationSpec = OptimizationSpec()
    output: OutputSpec = OutputSpec()

    def build_surface(self) -> Surface:
        return self.surface.build()

    def build_tool(self) -> CutterGeometry:
        return CutterGeometry(self.tool.R, self.tool.r)

    def build_strategy(self) -> MachiningStrategy:
        s = self.strategy
        return MachiningStrategy(
            plane_angle=s.plane_angle, stepover=s.stepover, chord_tol=s.chord_tol,
            max_sample_spacing=s.max_sample_spacing, base_tilt=s.base_tilt, base_yaw=s.base_yaw,
            scallop_tol=self.optimization.scallop_tol, linking=s.linking, field_spacing=s.field_spacing,
        )

    def build_machine(self) -> MachineModel:
        m = self.machine
        v = m.velocity_limits
        return MachineModel(
            x_range=m.x_range, y_range=m.y_range, z_range=m.z_range, a_range=m.a_range, c_range=m.c_range,
            velocity_limits=(v.X, v.Y, v.Z, v.A, v.C), o_ca=np.array(m.o_ca), o_am=np.array(m.o_am),
            setup_position=np.array(m.setup_position), setup_rotation=m.setup_rotation,
            singular_threshold=m.singular_threshold,
        )


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(text: str, source: str = "<string>") -> JobConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level")
    try:
        return JobConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_describe(exc)}") from exc


def load_config(path) -> JobConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))
