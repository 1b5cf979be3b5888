"""Parallel-plane finishing paths, effective radius, scallop control and local gouge check."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import GeometryError, LocatedError, NoOverlapError
from .intersection import Plane, PlaneCurve, plane_intersection, project_batch
from .machining import CutterGeometry, CutterLocation, OrientationField, axis_point, guide_point, tool_axis
from .surface import LocalFrame, Surface, frame_from_normal, normal, normal_curvature

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MachiningStrategy:
    plane_angle: float = 45.0
    stepover: float = 2.0
    chord_tol: float = 0.01
    max_sample_spacing: float = 1.0
    base_tilt: float = 1.0
    base_yaw: float = 0.0
    scallop_tol: float = 0.002
    linking: str = "zigzag"
    field_spacing: float = 2.0  # mm of drive curve per orientation-field cell

    def __post_init__(self):
        if self.stepover <= 0 or self.chord_tol <= 0 or self.scallop_tol <= 0:
            raise ValueError("stepover, chord_tol and scallop_tol must be positive")
        if self.max_sample_spacing <= 0 or self.field_spacing <= 0:
            raise ValueError("sample and field spacings must be positive")
        if self.linking not in ("zigzag", "one-way"):
            raise ValueError("linking must be 'zigzag' or 'one-way'")

    @property
    def plane_normal(self) -> np.ndarray:
        a = math.radians(self.plane_angle + 90.0)
        return np.array([math.cos(a), math.sin(a), 0.0])

    @property
    def drive_direction(self) -> np.ndarray:
        a = math.radians(self.plane_angle)
        return np.array([math.cos(a), math.sin(a), 0.0])


@dataclass
class DriveCurve:
    """Resampled plane/surface intersection, ordered along the drive direction."""

    plane: Plane
    offset: float
    params: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray

    def __len__(self):
        return len(self.params)

    def subset(self, idx) -> "DriveCurve":
        return DriveCurve(self.plane, self.offset, self.params[idx], self.points[idx], self.normals[idx], self.tangents[idx])


@dataclass
class Path:
    """Postures of one pass, stored in machining order."""

    index: int
    coord: float  # path coordinate in the orientation-field grid
    offset: float
    direction: int
    curve: DriveCurve  # machining order
    sample_coord: np.ndarray
    tilt: np.ndarray
    yaw: np.ndarray
    frame: LocalFrame
    axis: np.ndarray
    k: np.ndarray
    cl: np.ndarray
    partial: bool = False

    def __len__(self):
        return len(self.tilt)

    @property
    def cc(self) -> np.ndarray:
        return self.curve.points

    def locations(self) -> list[CutterLocation]:
        out = []
        for i in range(len(self)):
            fr = LocalFrame(self.frame.f[i], self.frame.n[i], self.frame.t[i])
            out.append(
                CutterLocation(
                    cc=self.cc[i], frame=fr, tilt=float(self.tilt[i]), yaw=float(self.yaw[i]),
                    axis=self.axis[i], k=self.k[i], cl=self.cl[i], param=tuple(self.curve.params[i]),
                )
            )
        return out


@dataclass
class ToolPath:
    paths: list[Path]
    strategy: MachiningStrategy
    tool: CutterGeometry
    field: OrientationField
    surface: Surface
    curves: list[DriveCurve] = field(default_factory=list, repr=False)
    insertions: list[tuple[float, tuple[float, float]]] = field(default_factory=list)

    @property
    def n_postures(self) -> int:
        return sum(len(p) for p in self.paths)

    def nonempty(self) -> list[Path]:
        return [p for p in self.paths if len(p) >= 2]


def plan_planes(surface: Surface, strategy: MachiningStrategy) -> list[Plane]:
    """Drive planes spaced ``stepover`` apart across the XY bounding box."""
    lo, hi = surface.xy_bounds()
    m = strategy.plane_normal
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [lo[0], hi[1]], [hi[0], hi[1]]])
    d = corners @ m[:2]
    d_min, extent = d.min(), d.max() - d.min()
    count = math.ceil(extent / strategy.stepover - 1e-9) + 1
    count = max(count, 2)
    return [Plane(m * (d_min + i * strategy.stepover), m) for i in range(count)]


def _plane_offset(plane: Plane) -> float:
    return float(plane.point @ plane.normal)


def _chord_errors(surface, plane, params, pts, n_check=3) -> np.ndarray:
    """Max deviation of the curve from each chord, checked at interior points."""
    fr = np.arange(1, n_check + 1) / (n_check + 1)
    guess = (1 - fr)[None, :, None] * params[:-1, None, :] + fr[None, :, None] * params[1:, None, :]
    uv, ok = project_batch(surface, plane, guess.reshape(-1, 2))
    if not ok.all():
        return np.full(len(params) - 1, np.inf)
    mid = surface._derivatives(uv[:, 0], uv[:, 1]).point.reshape(len(params) - 1, n_check, 3)
    p0 = pts[:-1, None, :]
    chord = (pts[1:] - pts[:-1])[:, None, :]
    cl2 = np.maximum(np.sum(chord * chord, axis=-1, keepdims=True), 1e-300)
    w = mid - p0
    w = w - np.sum(w * chord, axis=-1, keepdims=True) / cl2 * chord
    return np.linalg.norm(w, axis=-1).max(axis=1)


def resample_curve(surface: Surface, curve: PlaneCurve, strategy: MachiningStrategy) -> Optional[DriveCurve]:
    """Near-uniform arc-length resampling within spacing and chordal tolerance."""
    if curve.is_empty:
        return None
    plane = curve.plane
    if (curve.points[-1] - curve.points[0]) @ strategy.drive_direction < 0:
        curve = curve.reversed()
    s = curve.arc_lengths()
    length = s[-1]
    if length <= 1e-9:
        return None
    n = max(2, math.ceil(length / strategy.max_sample_spacing - 1e-9) + 1)
    for _ in range(12):
        targets = np.linspace(0.0, length, n)
        guess = np.column_stack([np.interp(targets, s, curve.params[:, 0]), np.interp(targets, s, curve.params[:, 1])])
        params, ok = project_batch(surface, plane, guess)
        params[0], params[-1] = curve.params[0], curve.params[-1]
        if not ok[1:-1].all():
            raise GeometryError("drive curve resampling failed to converge")
        pts = surface.derivatives(params[:, 0], params[:, 1]).point
        if _chord_errors(surface, plane, params, pts).max() <= strategy.chord_tol:
            break
        n = math.ceil(n * 1.5)
    else:
        raise GeometryError("chordal tolerance not met after resampling")
    nrm = normal(surface, params[:, 0], params[:, 1])
    tan = np.cross(plane.normal, nrm)
    tan /= np.linalg.norm(tan, axis=1, keepdims=True)
    chord = np.gradient(pts, axis=0)
    tan *= np.sign(np.sum(tan * chord, axis=1))[:, None]
    return DriveCurve(plane, _plane_offset(plane), params, pts, nrm, tan)


def drive_curves(surface: Surface, strategy: MachiningStrategy, planes=None, workers: int = 1) -> list[Optional[DriveCurve]]:
    planes = plan_planes(surface, strategy) if planes is None else planes

    def one(plane):
        c = plane_intersection(surface, plane, strategy.chord_tol, max_step=max(strategy.max_sample_spacing, 1.0) * 5)
        return resample_curve(surface, c, strategy)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, planes))
    return [one(p) for p in planes]


def field_shape(curves: list[Optional[DriveCurve]], strategy: MachiningStrategy) -> tuple[int, int]:
    longest = max((float(np.sum(np.linalg.norm(np.diff(c.points, axis=0), axis=1))) for c in curves if c is not None), default=0.0)
    return len(curves), max(2, math.ceil(longest / strategy.field_spacing) + 1)


def build_path(
    index: int,
    coord: float,
    curve: DriveCurve,
    direction: int,
    field: OrientationField,
    tool: CutterGeometry,
    strategy: MachiningStrategy,
    sample_span: tuple[float, float] | None = None,
    partial: bool = False,
) -> Path:
    """Postures along a drive curve (given in drive order) for the current field.

    ``sample_span`` maps the curve onto a sub-range of field sample
    coordinates (used for partial inserted passes).
    """
    n = len(curve)
    n_field = field.shape[1]
    lo, hi = sample_span if sample_span is not None else (0.0, n_field - 1.0)
    sample_coord = lo + (hi - lo) * np.arange(n) / max(n - 1, 1)
    order = np.arange(n) if direction > 0 else np.arange(n)[::-1]
    curve = curve.subset(order)
    sample_coord = sample_coord[order]
    tilt = field.tilt(np.full(n, coord), sample_coord)
    yaw = np.full(n, field.yaw + strategy.base_yaw)
    feed = curve.tangents * direction
    frame = frame_from_normal(curve.normals, feed)
    axis = tool_axis(frame, tilt, yaw)
    try:
        cl = axis_point(curve.points, curve.normals, axis, tool)
    except GeometryError as exc:
        bad = int(np.argmin(np.abs(tilt)))
        raise LocatedError(exc, index, bad) from exc
    k = guide_point(curve.points, curve.normals, tool.r)
    return Path(index, coord, curve.offset, direction, curve, sample_coord, tilt, yaw, frame, axis, k, cl, partial)


def _direction(i: int, strategy: MachiningStrategy) -> int:
    if strategy.linking == "one-way":
        return 1
    return 1 if i % 2 == 0 else -1


def _empty_path(i: int, offset: float, direction: int = 1) -> Path:
    z3 = np.empty((0, 3))
    empty_curve = DriveCurve(None, offset, np.empty((0, 2)), z3, z3, z3)
    return Path(i, float(i), offset, direction, empty_curve, np.empty(0), np.empty(0), np.empty(0),
                LocalFrame(z3, z3, z3), z3, z3, z3)


def generate(
    surface: Surface,
    strategy: MachiningStrategy,
    tool: CutterGeometry,
    field: Optional[OrientationField] = None,
    curves: Optional[list[Optional[DriveCurve]]] = None,
    workers: int = 1,
) -> ToolPath:
    """Full tool path: drive curves, frames, tilt-field query, axis, K and C_L."""
    planes = plan_planes(surface, strategy)
    if curves is None:
        curves = drive_curves(surface, strategy, planes, workers)
    if field is None:
        n_p, n_s = field_shape(curves, strategy)
        field = OrientationField.constant(n_p, n_s, strategy.base_tilt)
    if field.shape[0] != len(curves):
        raise ValueError(f"field has {field.shape[0]} path rows, tool path has {len(curves)} planes")
    paths = []
    for i, c in enumerate(curves):
        if c is None:
            paths.append(_empty_path(i, _plane_offset(planes[i]), _direction(i, strategy)))
        else:
            paths.append(build_path(i, float(i), c, _direction(i, strategy), field, tool, strategy))
    return ToolPath(paths, strategy, tool, field, surface, list(curves))


def rebuild(toolpath: ToolPath, field: OrientationField, path_indices=None) -> ToolPath:
    """Re-derive postures for a new field, reusing drive curves; only listed paths change."""
    paths = list(toolpath.paths)
    targets = range(len(paths)) if path_indices is None else path_indices
    for i in targets:
        old = paths[i]
        if len(old) == 0 or old.partial:
            continue
        curve = toolpath.curves[i]
        paths[i] = build_path(old.index, old.coord, curve, old.direction, field, toolpath.tool, toolpath.strategy)
    return replace(toolpath, paths=paths, field=field)


def effective_radius(tool: CutterGeometry, tilt, yaw=0.0):
    """Large radius of the elliptical tool profile normal to the feed (mm).

    ``inf`` signals flat-bottom cutting (zero tilt and yaw).
    """
    th = np.radians(np.asarray(tilt, dtype=float))
    ps = np.radians(np.asarray(yaw, dtype=float))
    R, r = tool.R, tool.r
    num = r * (R + r * np.sin(th))
    den = r * np.sin(th) * np.cos(ps) ** 2 + (R + r * np.sin(th)) * np.sin(ps) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return out if out.ndim else float(out)


def scallop_height(r_eq_left, r_eq_right, stepover):
    """Cusp height between two circular profiles tangent to a flat surface ``stepover`` apart."""
    r1 = np.asarray(r_eq_left, dtype=float)
    r2 = np.asarray(r_eq_right, dtype=float)
    s = np.asarray(stepover, dtype=float)
    finite = np.isfinite(r1) & np.isfinite(r2)
    a = np.where(finite, r1, 1.0)
    b = np.where(finite, r2, 1.0)
    disc = (a + b) ** 2 - (a - b) ** 2 - s * s
    if np.any(finite & (disc < 0)):
        raise NoOverlapError("stepover too large: adjacent profiles do not overlap")
    with np.errstate(divide="ignore", invalid="ignore"):
        # (r1 + r2 - sqrt(4 r1 r2 - s^2)) / (2 (1 + (r1 - r2)^2 / s^2)), rearranged to avoid s = 0
        h = s * s * (a + b - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * (s * s + (a - b) ** 2))
    h = np.where(s == 0, 0.0, h)
    out = np.where(finite, h, 0.0)
    return out if out.ndim else float(out)


def _polyline_distance(points: np.ndarray, poly: np.ndarray):
    """Distance from each point to a polyline and the fractional index of the foot."""
    from scipy.spatial import cKDTree

    idx = cKDTree(poly).query(points)[1]
    best = np.full(len(points), np.inf)
    foot = idx.astype(float)
    for off in (-1, 0):
        i0 = np.clip(idx + off, 0, len(poly) - 2)
        a, b = poly[i0], poly[i0 + 1]
        ab = b - a
        t = np.clip(np.sum((points - a) * ab, axis=1) / np.maximum(np.sum(ab * ab, axis=1), 1e-300), 0.0, 1.0)
        d = np.linalg.norm(points - (a + t[:, None] * ab), axis=1)
        better = d < best
        best = np.where(better, d, best)
        foot = np.where(better, i0 + t, foot)
    return best, foot


def pair_scallops(tool: CutterGeometry, a: Path, b: Path):
    """Scallop estimate at each sample of ``a`` against neighbour pass ``b``.

    Samples whose foot point falls on an end of ``b`` are ``nan``: there the
    true neighbour is another pass or the surface boundary.
    """
    dist, foot = _polyline_distance(a.cc, b.cc)
    j = np.clip(np.rint(foot).astype(int), 0, len(b) - 1)
    ra = effective_radius(tool, a.tilt, a.yaw)
    rb = effective_radius(tool, b.tilt[j], b.yaw[j])
    h = scallop_height(ra, rb, dist)
    h = np.where((foot <= 1e-9) | (foot >= len(b) - 1 - 1e-9), np.nan, h)
    return h


def scallop_profile(toolpath: ToolPath) -> list[tuple[int, int, np.ndarray]]:
    """Per-sample scallop estimates for consecutive passes ordered by path coordinate."""
    ordered = sorted(toolpath.nonempty(), key=lambda p: p.coord)
    out = []
    for pa, pb in zip(ordered, ordered[1:]):
        h = pair_scallops(toolpath.tool, pa, pb)
        out.append((pa.index, pb.index, h))
    return out


def max_scallop(toolpath: ToolPath) -> float:
    vals = [np.nanmax(h) for _, _, h in scallop_profile(toolpath) if np.any(np.isfinite(h))]
    return float(max(vals)) if vals else 0.0


def tighten(
    toolpath: ToolPath,
    scallop_tol: float,
    max_levels: int = 3,
    margin: int = 2,
    direction_cost: Optional[Callable[[Path], float]] = None,
) -> ToolPath:
    """Insert partial passes on bisecting planes wherever the scallop exceeds ``scallop_tol``.

    Passes at their fixed spacing stay in place; each refinement level
    halves the local gap. Residual violations after ``max_levels`` are
    logged as a warning. An inserted pass runs against its lower neighbour
    unless ``direction_cost`` is given, in which case the cheaper feed
    direction wins (ties keep the default).
    """
    if scallop_tol <= 0:
        raise ValueError("scallop_tol must be positive")
    if math.isinf(scallop_tol):
        return toolpath
    paths = list(toolpath.paths)
    insertions = list(toolpath.insertions)
    strategy = toolpath.strategy
    next_index = max((p.index for p in paths), default=-1) + 1
    for level in range(max_levels):
        ordered = sorted([p for p in paths if len(p) >= 2], key=lambda p: p.coord)
        new_paths = []
        for pa, pb in zip(ordered, ordered[1:]):
            h = pair_scallops(toolpath.tool, pa, pb)
            bad = np.nonzero(np.nan_to_num(h, nan=0.0) > scallop_tol)[0]
            if len(bad) == 0:
                continue
            lo = max(int(bad.min()) - margin, 0)
            hi = min(int(bad.max()) + margin, len(pa) - 1)
            s_lo, s_hi = sorted((float(pa.sample_coord[lo]), float(pa.sample_coord[hi])))
            offset = 0.5 * (pa.offset + pb.offset)
            m = strategy.plane_normal
            plane = Plane(m * offset, m)
            curve = resample_curve(toolpath.surface, plane_intersection(toolpath.surface, plane, strategy.chord_tol), strategy)
            if curve is None:
                continue
            # trim to the part of the drive curve next to the offending samples
            ends = pa.cc[[lo, hi]]
            _, foot = _polyline_distance(ends, curve.points)
            f0, f1 = sorted(foot)
            i0, i1 = max(int(math.floor(f0)), 0), min(int(math.ceil(f1)), len(curve) - 1)
            if i1 - i0 < 1:
                continue
            sub = curve.subset(np.arange(i0, i1 + 1))
            coord = 0.5 * (pa.coord + pb.coord)
            new = build_path(next_index, coord, sub, -pa.direction, toolpath.field, toolpath.tool, strategy, (s_lo, s_hi), partial=True)
            if direction_cost is not None:
                alt = build_path(next_index, coord, sub, pa.direction, toolpath.field, toolpath.tool, strategy, (s_lo, s_hi), partial=True)
                if direction_cost(alt) < direction_cost(new):
                    new = alt
            next_index += 1
            new_paths.append(new)
            insertions.append((coord, (s_lo, s_hi)))
        if not new_paths:
            break
        paths.extend(new_paths)
    out = replace(toolpath, paths=paths, insertions=insertions)
    residual = max_scallop(out)
    if residual > scallop_tol:
        log.warning("refinement limit reached: residual scallop %.5f mm > %.5f mm", residual, scallop_tol)
    return out


def gouge_check(toolpath: ToolPath, surface: Surface, path_indices=None) -> list[tuple[int, int]]:
    """Samples whose effective radius exceeds the local concave radius across the feed."""
    flagged = []
    wanted = None if path_indices is None else set(path_indices)
    for p in toolpath.nonempty():
        if wanted is not None and p.index not in wanted:
            continue
        kappa = normal_curvature(surface, p.curve.params[:, 0], p.curve.params[:, 1], p.frame.t)
        req = effective_radius(toolpath.tool, p.tilt, p.yaw)
        hit = (kappa < 0) & (req * np.abs(kappa) > 1.0)
        flagged.extend((p.index, int(j)) for j in np.nonzero(hit)[0])
    return flagged
