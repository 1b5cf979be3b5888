"""Joint-velocity estimation, saturation detection, effective feed and the tilt optimisation loop.

Velocities come from the inverse differential model on three successive
postures: block times follow from the part-relative length of each joint
interpolated block at the programmed feed.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import LocatedError, UnreachablePoseError
from .kinematics import AXES, JointPose, MachineModel, inverse_path, relative_path_length
from .machining import deform_field
from .planner import ToolPath, gouge_check, rebuild, tighten

log = logging.getLogger(__name__)

ZERO_BLOCK = 1e-9  # mm; shorter blocks are merged with their neighbour
REGION_GAP = 2  # unsaturated samples tolerated inside one region


@dataclass(frozen=True)
class Segment:
    """Solved joint values of one pass; ``samples`` index the source postures."""

    path: int
    samples: np.ndarray
    joints: np.ndarray
    singular: np.ndarray = None


@dataclass
class KinematicProfile:
    """One record per posture; record ``j`` carries the block ending at ``j``.

    The first record of every pass has a zero-length block.
    """

    path: np.ndarray
    sample: np.ndarray
    joints: np.ndarray
    block_len: np.ndarray  # mm, part-relative
    dt: np.ndarray  # s at F_prog
    velocity: np.ndarray  # mm/min for XYZ, rpm for A and C
    F_prog: float
    limits: np.ndarray
    saturated: np.ndarray = None
    F_eff: np.ndarray = None

    def __post_init__(self):
        if self.saturated is None:
            self.saturated = np.abs(self.velocity) > self.limits
        if self.F_eff is None:
            with np.errstate(divide="ignore"):
                ratio = np.where(np.abs(self.velocity) > 0, self.limits / np.abs(self.velocity), np.inf)
            self.F_eff = self.F_prog * np.minimum(1.0, ratio.min(axis=1))

    def __len__(self):
        return len(self.path)

    @property
    def frn(self) -> np.ndarray:
        """Inverse-time feed numbers (1/min); zero on pass-start records."""
        with np.errstate(divide="ignore"):
            return np.where(self.dt > 0, 60.0 / np.where(self.dt > 0, self.dt, 1.0), 0.0)

    @property
    def time_prog(self) -> float:
        return float(self.dt.sum())

    @property
    def time_eff(self) -> float:
        """Time in s with each block run at its capped feed."""
        return float(np.sum(self.block_len / self.F_eff) * 60.0)

    def saturated_count(self, axis: str = "C") -> int:
        return int(self.saturated[:, AXES.index(axis)].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "sample", "block_len_mm", "dt_s", "vx", "vy", "vz", "vA_rpm", "vC_rpm", "sat_A", "sat_C", "F_eff"])
        for i in range(len(self)):
            v = self.velocity[i]
            w.writerow(
                [int(self.path[i]), int(self.sample[i]), f"{self.block_len[i]:.6f}", f"{self.dt[i]:.9f}"]
                + [f"{x:.4f}" for x in v]
                + [int(self.saturated[i, 3]), int(self.saturated[i, 4]), f"{self.F_eff[i]:.3f}"]
            )
        return buf.getvalue()


@dataclass(frozen=True)
class AxisReport:
    axis: str
    max_abs: float
    limit: float
    regions: list[tuple[int, int, int]]  # (path, first_sample, last_sample)
    count: int


@dataclass(frozen=True)
class SaturationReport:
    axes: dict[str, AxisReport]
    saturated_fraction: float

    def count(self, axis: str = "C") -> int:
        return self.axes[axis].count

    def regions(self, axis: str = "C") -> list[tuple[int, int, int]]:
        return self.axes[axis].regions


def joint_velocities(q_prev, q_i, q_next, machine: MachineModel, F_prog: float) -> np.ndarray:
    """Central-difference joint velocities at ``q_i`` (mm/min and rpm)."""
    q_prev, q_i, q_next = (np.asarray(q, dtype=float) for q in (q_prev, q_i, q_next))
    t = (relative_path_length(q_prev, q_i, machine) + relative_path_length(q_i, q_next, machine)) / F_prog
    if t <= 0:
        raise ZeroDivisionError("zero-length double block")
    v = (q_next - q_prev) / t
    v[3:] /= 360.0
    return v


def _differentiate(joints: np.ndarray, t_min: np.ndarray) -> np.ndarray:
    """Velocities from block durations ``t_min`` (minutes, ``len(joints) - 1`` of them)."""
    n = len(joints)
    v = np.zeros_like(joints)
    if n >= 2:
        v[0] = (joints[1] - joints[0]) / t_min[0]
        v[-1] = (joints[-1] - joints[-2]) / t_min[-1]
    if n >= 3:
        v[1:-1] = (joints[2:] - joints[:-2]) / (t_min[:-1] + t_min[1:])[:, None]
    v[:, 3:] /= 360.0
    return v


def profile_segments(segments: Sequence[Segment], machine: MachineModel, F_prog: float, n_sub: int = 16) -> KinematicProfile:
    if F_prog <= 0:
        raise ValueError("feedrate must be positive")
    cols = {k: [] for k in ("path", "sample", "joints", "block_len", "dt", "velocity")}
    for seg in segments:
        q = np.asarray(seg.joints, dtype=float)
        samples = np.asarray(seg.samples)
        if len(q) == 0:
            continue
        ds = relative_path_length(q[:-1], q[1:], machine, n_sub) if len(q) > 1 else np.empty(0)
        keep = np.concatenate([[True], ds > ZERO_BLOCK])
        if not keep.all():
            log.warning("path %d: merged %d zero-length blocks", seg.path, int((~keep).sum()))
            q, samples = q[keep], samples[keep]
            ds = relative_path_length(q[:-1], q[1:], machine, n_sub) if len(q) > 1 else np.empty(0)
        t_min = ds / F_prog
        cols["path"].append(np.full(len(q), seg.path))
        cols["sample"].append(samples)
        cols["joints"].append(q)
        cols["block_len"].append(np.concatenate([[0.0], ds]))
        cols["dt"].append(np.concatenate([[0.0], t_min * 60.0]))
        cols["velocity"].append(_differentiate(q, t_min) if len(q) > 1 else np.zeros_like(q))
    if not cols["path"]:
        e = np.empty(0)
        return KinematicProfile(e.astype(int), e.astype(int), np.empty((0, 5)), e, e, np.empty((0, 5)), F_prog, np.array(machine.velocity_limits))
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    return KinematicProfile(F_prog=F_prog, limits=np.array(machine.velocity_limits, dtype=float), **cat)


def machining_order(toolpath: ToolPath):
    return sorted(toolpath.nonempty(), key=lambda p: p.coord)


def solve_paths(paths, machine: MachineModel, prev: Optional[JointPose] = None) -> list[Segment]:
    """Sequential IKT over passes; C stays unwound from one pass to the next."""
    out = []
    for p in paths:
        try:
            q, sing = inverse_path(p.cl, p.axis, machine, prev)
        except UnreachablePoseError as exc:
            raise LocatedError(exc, p.index, exc.sample) from exc
        out.append(Segment(p.index, np.arange(len(p)), q, sing))
        prev = JointPose(*q[-1])
    return out


def simulate(toolpath: ToolPath, machine: MachineModel, F_prog: float) -> tuple[KinematicProfile, list[Segment]]:
    segments = solve_paths(machining_order(toolpath), machine)
    return profile_segments(segments, machine, F_prog), segments


def _runs(flags: np.ndarray, gap: int) -> list[tuple[int, int]]:
    idx = np.nonzero(flags)[0]
    if len(idx) == 0:
        return []
    runs = [[idx[0], idx[0]]]
    for i in idx[1:]:
        if i - runs[-1][1] <= gap + 1:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    return [(int(a), int(b)) for a, b in runs]


def saturation(profile: KinematicProfile, machine: MachineModel, gap: int = REGION_GAP) -> SaturationReport:
    axes = {}
    for k, name in enumerate(AXES):
        flags = np.abs(profile.velocity[:, k]) > machine.velocity_limits[k]
        regions = []
        for path in dict.fromkeys(profile.path.tolist()):
            sel = np.nonzero(profile.path == path)[0]
            for a, b in _runs(flags[sel], gap):
                regions.append((int(path), int(profile.sample[sel[a]]), int(profile.sample[sel[b]])))
        max_abs = float(np.abs(profile.velocity[:, k]).max()) if len(profile) else 0.0
        axes[name] = AxisReport(name, max_abs, float(machine.velocity_limits[k]), regions, int(flags.sum()))
    any_sat = np.abs(profile.velocity) > np.asarray(machine.velocity_limits)
    frac = float(any_sat.any(axis=1).mean()) if len(profile) else 0.0
    return SaturationReport(axes, frac)


def effective_feedrate(profile: KinematicProfile, machine: MachineModel) -> KinematicProfile:
    limits = np.asarray(machine.velocity_limits, dtype=float)
    return KinematicProfile(
        profile.path, profile.sample, profile.joints, profile.block_len, profile.dt, profile.velocity,
        profile.F_prog, limits,
    )


def inverse_time(profile: KinematicProfile) -> np.ndarray:
    return profile.frn


@dataclass
class OptimizationResult:
    toolpath: ToolPath
    field: object
    before: SaturationReport
    after: SaturationReport  # optimised field on the original passes
    final: SaturationReport  # after tightening, inserted passes included
    profile: KinematicProfile  # of the final tool path
    accepted: list[dict] = field(default_factory=list)
    rejected: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def deformed_paths(self) -> list[int]:
        changed = np.any(self.field.values != self.field.base_tilt, axis=1)
        return [int(i) for i in np.nonzero(changed)[0]]


def _region_rect(toolpath: ToolPath, region, pad: int):
    """Field-grid rectangle ``(path, (s0, s1))`` covering a saturated run."""
    path, a, b = region
    p = toolpath.paths[path]
    sc = p.sample_coord[[a, b]]
    n_s = toolpath.field.shape[1]
    s0 = max(int(math.floor(sc.min())) - pad, 0)
    s1 = min(int(math.ceil(sc.max())) + pad, n_s - 1)
    return int(round(p.coord)), (s0, s1)


def _local_count(toolpath, indices, machine, F_prog, prev_of):
    total = 0
    by_index = {p.index: p for p in toolpath.paths}
    for i in indices:
        p = by_index[i]
        if len(p) < 2:
            continue
        seg = solve_paths([p], machine, prev_of.get(i))
        prof = profile_segments(seg, machine, F_prog)
        total += int((np.abs(prof.velocity[:, 4]) > machine.velocity_limits[4]).sum())
        if np.any(np.abs(prof.velocity[:, 3]) > machine.velocity_limits[3]):
            total += 10**6  # A saturation is never an acceptable trade
    return total


def optimize_tilt(
    toolpath: ToolPath,
    machine: MachineModel,
    F_prog: float,
    candidate_tilts: Sequence[float] = (1.0, 2.0, 3.0, 5.0, 8.0),
    scallop_tol: float = 0.002,
    blend_halfwidth: tuple[int, int] = (1, 8),
    region_pad: int = 6,
    max_iterations: int = 200,
) -> OptimizationResult:
    """Greedy tilt-field deformation over saturated C regions, worst first.

    A candidate is accepted only if it strictly lowers the C-saturated count
    of the paths it touches, keeps A unsaturated there and adds no gouge
    flags. Regions without an improving candidate are skipped.
    """
    cands = sorted(float(c) for c in candidate_tilts)
    if not cands:
        raise ValueError("no candidate tilts")
    if any(p.partial for p in toolpath.paths):
        raise ValueError("optimize before tightening")
    hp, hs = (blend_halfwidth, blend_halfwidth) if np.isscalar(blend_halfwidth) else blend_halfwidth
    surface = toolpath.surface
    profile, segments = simulate(toolpath, machine, F_prog)
    before = saturation(profile, machine)
    current = toolpath
    accepted, rejected = [], []
    tried: set = set()
    prev_of = {}
    for seg_prev, seg in zip(segments, segments[1:]):
        prev_of[seg.path] = JointPose(*seg_prev.joints[-1])
    while len(accepted) < max_iterations:
        regions = [r for r in saturation(profile, machine).regions("C") if r not in tried]
        if not regions:
            break
        region = max(regions, key=lambda r: (r[2] - r[1], -r[0], -r[1]))
        tried.add(region)
        path_row, (s0, s1) = _region_rect(current, region, region_pad)
        n_rows = current.field.shape[0]
        affected = [i for i in range(max(path_row - hp, 0), min(path_row + hp, n_rows - 1) + 1)]
        base_count = _local_count(current, affected, machine, F_prog, prev_of)
        base_gouge = set(gouge_check(current, surface, affected))
        best = None
        for tilt in cands:
            fld = deform_field(current.field, [(path_row, (s0, s1))], tilt, (hp, hs))
            if np.array_equal(fld.values, current.field.values):
                continue
            trial = rebuild(current, fld, affected)
            gouge = set(gouge_check(trial, surface, affected))
            if not gouge <= base_gouge:
                continue
            count = _local_count(trial, affected, machine, F_prog, prev_of)
            if count < base_count and (best is None or count < best[0]):
                best = (count, tilt, trial)
        if best is None:
            rejected.append(region)
            continue
        count, tilt, current = best
        accepted.append({"region": region, "tilt": tilt, "rows": affected, "samples": (s0, s1), "count_before": base_count, "count_after": count})
        tried.clear()  # the field changed; earlier failures may now improve
        tried.update(rejected)
        profile, segments = simulate(current, machine, F_prog)
    def pass_cost(path):
        prof = profile_segments(solve_paths([path], machine), machine, F_prog)
        return int(prof.saturated[:, 4].sum())

    after = saturation(profile, machine)
    tightened = tighten(current, scallop_tol, direction_cost=pass_cost)
    profile, _ = simulate(tightened, machine, F_prog)
    final = saturation(profile, machine)
    return OptimizationResult(tightened, current.field, before, after, final, profile, accepted, rejected)
