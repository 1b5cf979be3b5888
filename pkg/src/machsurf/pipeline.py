"""Batch job: plan, solve, simulate, optimise, tighten and write all artefacts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .clfile import CLPath, read_cl, write_cl
from .config import JobConfig
from .errors import LocatedError, UnreachablePoseError
from .gcode import emit_gcode, read_nc
from .kinematics import AXES, JointPose, MachineModel, inverse_path
from .planner import generate, gouge_check, max_scallop, tighten
from .simulator import (
    KinematicProfile,
    SaturationReport,
    Segment,
    optimize_tilt,
    profile_segments,
    saturation,
    simulate,
)

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    summary: dict
    files: dict[str, Path] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)


def _r(x: float, nd: int = 6):
    """Rounded plain float for stable summaries."""
    return float(f"{x:.{nd}f}") if np.isfinite(x) else str(x)


def report_dict(rep: SaturationReport) -> dict:
    return {
        "saturated_fraction": _r(rep.saturated_fraction),
        "axes": {
            name: {
                "max_abs": _r(a.max_abs, 4),
                "limit": _r(a.limit, 4),
                "saturated_blocks": a.count,
                "regions": [list(r) for r in a.regions],
            }
            for name, a in rep.axes.items()
            if name in ("A", "C") or a.count
        },
    }


def _write(out_dir: Path, name: str, text: str) -> Path:
    path = out_dir / name
    path.write_text(text)
    return path


def run(job: JobConfig, out_dir: Optional[Path] = None, workers: int = 1, optimize: Optional[bool] = None) -> RunResult:
    """Full pipeline; artefacts land in ``out_dir`` (default ``job.output.dir``)."""
    surface = job.build_surface()
    tool = job.build_tool()
    strategy = job.build_strategy()
    machine = job.build_machine()
    opt = job.optimization
    do_opt = opt.enabled if optimize is None else optimize
    F = job.feedrate

    toolpath = generate(surface, strategy, tool, workers=workers)
    log.info("generated %d passes, %d postures", len(toolpath.nonempty()), toolpath.n_postures)
    if do_opt:
        res = optimize_tilt(
            toolpath, machine, F, opt.candidates, opt.scallop_tol, opt.blend_halfwidth,
            region_pad=opt.region_pad, max_iterations=opt.max_iterations,
        )
        before, after, final_tp, profile, final = res.before, res.after, res.toolpath, res.profile, res.final
        deformed = res.deformed_paths
        accepted = [{"region": list(a["region"]), "tilt": a["tilt"], "rows": a["rows"]} for a in res.accepted]
    else:
        profile0, _ = simulate(toolpath, machine, F)
        before = after = saturation(profile0, machine)
        final_tp = tighten(toolpath, opt.scallop_tol)
        profile, _ = simulate(final_tp, machine, F)
        final = saturation(profile, machine)
        deformed, accepted = [], []

    gouges = gouge_check(final_tp, surface)
    scallop = max_scallop(final_tp)
    out = job.output
    out_dir = Path(out_dir if out_dir is not None else out.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "cl": _write(out_dir, f"{out.stem}.cl", write_cl(final_tp, out.cl_decimals)),
        "nc": _write(out_dir, f"{out.stem}.nc", emit_gcode(profile, out.feed_mode, out.nc_decimals, out.retract)),
        "report": _write(out_dir, f"{out.stem}_report.csv", profile.to_csv()),
        "field": _write(out_dir, f"{out.stem}_field.csv", final_tp.field.to_csv()),
    }
    violations = []
    if scallop > opt.scallop_tol:
        violations.append(f"residual scallop {scallop:.5f} mm > {opt.scallop_tol} mm")
    for name in AXES:
        if final.count(name):
            violations.append(f"{name} saturated on {final.count(name)} blocks")
    if gouges:
        violations.append(f"{len(gouges)} local gouge flags")
    summary = {
        "job": job.name,
        "feedrate_mm_min": _r(F, 3),
        "passes": len(toolpath.nonempty()),
        "inserted_passes": len(final_tp.insertions),
        "postures": int(len(profile)),
        "optimization": {"enabled": bool(do_opt), "accepted": accepted, "deformed_paths": deformed},
        "saturation_before": report_dict(before),
        "saturation_after": report_dict(after),
        "saturation_final": report_dict(final),
        "time_programmed_s": _r(profile.time_prog),
        "time_effective_s": _r(profile.time_eff),
        "relative_length_mm": _r(float(profile.block_len.sum())),
        "max_scallop_mm": _r(scallop, 7),
        "scallop_tol_mm": opt.scallop_tol,
        "gouge_flags": [list(g) for g in gouges],
        "violations": violations,
    }
    files["summary"] = _write(out_dir, f"{out.stem}_summary.yaml", yaml.safe_dump(summary, sort_keys=False, default_flow_style=None))
    return RunResult(summary, files, violations)


def solve_cl(paths: list[CLPath], machine: MachineModel) -> list[Segment]:
    out, prev = [], None
    for p in paths:
        try:
            q, sing = inverse_path(p.points, p.axes, machine, prev)
        except UnreachablePoseError as exc:
            raise LocatedError(exc, p.path, exc.sample) from exc
        out.append(Segment(p.path, np.arange(len(q)), q, sing))
        prev = JointPose(*q[-1])
    return out


def post(cl_text: str, job: JobConfig) -> tuple[str, KinematicProfile]:
    """IKT only: CL text to NC text."""
    paths, _ = read_cl(cl_text)
    machine = job.build_machine()
    profile = profile_segments(solve_cl(paths, machine), machine, job.feedrate)
    out = job.output
    return emit_gcode(profile, out.feed_mode, out.nc_decimals, out.retract), profile


def simulate_file(text: str, job: JobConfig) -> tuple[KinematicProfile, SaturationReport]:
    """Profile of a CL or NC program at the job feedrate."""
    machine = job.build_machine()
    if "GOTO/" in text:
        segments = solve_cl(read_cl(text)[0], machine)
    else:
        segments = read_nc(text)
    profile = profile_segments(segments, machine, job.feedrate)
    return profile, saturation(profile, machine)
