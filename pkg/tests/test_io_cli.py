import csv
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from machsurf.cli import main
from machsurf.clfile import read_cl, write_cl
from machsurf.config import load_config, parse_config
from machsurf.errors import ConfigError
from machsurf.gcode import emit_gcode, read_nc
from machsurf.kinematics import MachineModel, forward
from machsurf.machining import CutterGeometry
from machsurf.pipeline import post, run, simulate_file
from machsurf.planner import MachiningStrategy, generate
from machsurf.simulator import Segment, profile_segments, simulate
from machsurf.surface import AnalyticSaddle

JOBS = Path(__file__).resolve().parent.parent / "jobs"
MACHINE = MachineModel()

FLAT_JOB = """\
name: flat
surface: {type: plane, size: [40, 40]}
tool: {R: 9, r: 1}
feedrate: 5000
strategy: {plane_angle: 0}
output: {stem: flat}
"""


def _write_job(tmp_path, text=FLAT_JOB, name="job.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_two_block_program():
    q = np.array([[0, 0, 0, 0, 0], [1, 0, 0, 0, 0], [3, 0, 0, 0, 0]], float)
    prof = profile_segments([Segment(0, np.arange(3), q)], MACHINE, 5000.0)
    assert emit_gcode(prof).splitlines() == [
        "%",
        "(machsurf)",
        "G21 G90 G17",
        "G93",
        "(PATH 0)",
        "N1 G00 X0.0000 Y0.0000 Z0.0000 A0.0000 C0.0000",
        "N2 G01 X1.0000 Y0.0000 Z0.0000 A0.0000 C0.0000 F5000.0000",
        "N3 G01 X3.0000 Y0.0000 Z0.0000 A0.0000 C0.0000 F2500.0000",
        "G94",
        "M30",
        "%",
    ]


def test_empty_program_is_header_and_footer():
    prof = profile_segments([], MACHINE, 5000.0)
    assert emit_gcode(prof).splitlines() == ["%", "(machsurf)", "G21 G90 G17", "G93", "G94", "M30", "%"]


def test_units_per_min_mode_and_retract():
    q = np.array([[0, 0, 0, 0, 0], [1, 0, 0, 0, 0], [3, 0, 0, 0, 0]], float)
    prof = profile_segments([Segment(0, np.arange(3), q), Segment(1, np.arange(3), q[::-1])], MACHINE, 5000.0)
    text = emit_gcode(prof, mode="units_per_min", retract=50.0)
    lines = text.splitlines()
    assert lines[3] == "G94"
    assert sum("F5000.0000" in line for line in lines) == 2
    assert "N1 G00 Z50.0000" in lines
    segs = read_nc(text)
    assert [s.path for s in segs] == [0, 1]
    assert np.allclose(segs[1].joints, q[::-1])
    with pytest.raises(ValueError):
        emit_gcode(prof, mode="G95")


def test_nc_reader_errors():
    with pytest.raises(ConfigError):
        read_nc("N1 G01 X0 Y0 Z0 A0 C0\n")
    with pytest.raises(ConfigError):
        read_nc("(PATH 0)\nN1 G01 X0 Y0\n")


def _saddle():
    return generate(AnalyticSaddle(rotation=45.0), MachiningStrategy(stepover=10.0), CutterGeometry(9.0, 1.0))


def test_cl_round_trip():
    tp = _saddle()
    paths, tool = read_cl(write_cl(tp, decimals=10))
    assert tool == tp.tool
    src = sorted(tp.nonempty(), key=lambda p: p.coord)
    assert [p.path for p in paths] == [p.index for p in src]
    for cl, p in zip(paths, src):
        assert np.abs(cl.points - p.cl).max() < 1e-9
        assert np.abs(cl.axes - p.axis).max() < 1e-9


def test_cl_reader_rejects_garbage():
    with pytest.raises(ConfigError):
        read_cl("$$ PATH 0\nGOTO/ 1,2,3\n")


def test_cl_samples_round_trip_through_nc():
    # at 10 decimals the NC joints reproduce every CL posture
    tp = _saddle()
    prof, _ = simulate(tp, MACHINE, 5000.0)
    segments = read_nc(emit_gcode(prof, decimals=10))
    paths, _ = read_cl(write_cl(tp, decimals=10))
    assert [s.path for s in segments] == [p.path for p in paths]
    for seg, cl in zip(segments, paths):
        pose = forward(seg.joints, MACHINE)
        assert np.abs(pose.p - cl.points).max() < 1e-6
        assert np.abs(pose.u - cl.axes).max() < 1e-9


def test_program_text_is_deterministic():
    a = emit_gcode(simulate(_saddle(), MACHINE, 5000.0)[0])
    b = emit_gcode(simulate(_saddle(), MACHINE, 5000.0)[0])
    assert a == b


def test_minimal_config_gets_defaults():
    job = parse_config("surface: {type: saddle}\ntool: {R: 9, r: 1}\nfeedrate: 5000\n")
    assert job.strategy.plane_angle == 45.0 and job.strategy.stepover == 2.0
    assert job.machine.velocity_limits.A == 15.0 and job.machine.velocity_limits.C == 20.0
    assert job.machine.a_range == (-30.0, 120.0)
    assert job.optimization.candidates == [1.0, 2.0, 3.0, 5.0, 8.0]


def test_feedrate_must_be_positive():
    with pytest.raises(ConfigError, match="feedrate"):
        parse_config("surface: {type: saddle}\ntool: {R: 9, r: 1}\nfeedrate: 0\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="spindle"):
        parse_config("surface: {type: saddle}\ntool: {R: 9, r: 1}\nfeedrate: 5000\nspindle: 12000\n")
    with pytest.raises(ConfigError, match="tool.diameter"):
        parse_config("surface: {type: saddle}\ntool: {R: 9, r: 1, diameter: 20}\nfeedrate: 5000\n")


def test_missing_block_named():
    with pytest.raises(ConfigError, match="tool"):
        parse_config("surface: {type: saddle}\nfeedrate: 5000\n")


def test_parse_error_has_line_and_column():
    with pytest.raises(ConfigError, match=r"job\.yaml:2:8"):
        parse_config("surface: {type: saddle}\ntool: R: 9\nfeedrate: 5000\n", "job.yaml")


def test_unsorted_candidates_rejected():
    with pytest.raises(ConfigError, match="candidates"):
        parse_config("surface: {type: saddle}\ntool: {R: 9, r: 1}\nfeedrate: 5000\noptimization: {candidates: [5, 1]}\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_saddle_job_parses_to_reference_scenario():
    job = load_config(JOBS / "saddle_job.yaml")
    assert job.surface.type == "saddle"
    assert (job.tool.R, job.tool.r) == (9.0, 1.0)
    assert job.strategy.base_tilt == 1.0 and job.strategy.plane_angle == 45.0
    assert job.feedrate == 5000.0
    assert (job.machine.velocity_limits.A, job.machine.velocity_limits.C) == (15.0, 20.0)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_flat_job_runs_clean(tmp_path):
    job = parse_config(FLAT_JOB)
    res = run(job, tmp_path)
    s = res.summary
    assert res.violations == []
    assert s["saturation_final"]["axes"]["C"]["saturated_blocks"] == 0
    rows = _rows(res.files["report"])
    assert all(float(r["F_eff"]) == 5000.0 for r in rows)
    total = sum(float(r["block_len_mm"]) for r in rows)
    assert math.isclose(s["time_programmed_s"], total / 5000 * 60, rel_tol=1e-6)
    assert math.isclose(s["time_effective_s"], s["time_programmed_s"], rel_tol=1e-9)
    assert yaml.safe_load(res.files["summary"].read_text()) == s
    assert res.files["field"].read_text().startswith("path_index,sample_index,tilt_deg\n")


def test_cli_plan_post_simulate(tmp_path, capsys):
    job = _write_job(tmp_path)
    out = tmp_path / "out"
    assert main(["plan", str(job), "--out-dir", str(out), "--workers", "2"]) == 0
    cl_text = (out / "flat.cl").read_text()
    nc_text = (out / "flat.nc").read_text()
    assert cl_text.startswith("$$ CL machsurf")
    assert "G93" in nc_text
    # post re-derives the program from the CL file; the CL rounding moves FRN in the last digit
    post_dir = tmp_path / "post"
    assert main(["post", str(out / "flat.cl"), "--config", str(job), "--out-dir", str(post_dir)]) == 0
    a, b = read_nc((post_dir / "flat.nc").read_text()), read_nc(nc_text)
    assert [s.path for s in a] == [s.path for s in b]
    assert all(np.allclose(x.joints, y.joints, atol=2e-4) for x, y in zip(a, b))
    capsys.readouterr()
    assert main(["simulate", str(out / "flat.nc"), str(job), "--out-dir", str(tmp_path / "sim")]) == 0
    report = yaml.safe_load(capsys.readouterr().out)
    assert report["axes"]["C"]["saturated_blocks"] == 0
    assert (tmp_path / "sim" / "flat_report.csv").exists()


def test_post_and_simulate_functions_agree(tmp_path):
    job = parse_config(FLAT_JOB)
    res = run(job, tmp_path)
    nc, prof = post(res.files["cl"].read_text(), job)
    prof_nc, rep = simulate_file(nc, job)
    prof_cl, _ = simulate_file(res.files["cl"].read_text(), job)
    assert len(prof_nc) == len(prof_cl) == len(prof)
    assert np.allclose(prof_nc.block_len, prof_cl.block_len, atol=1e-3)
    assert rep.count("C") == 0


def test_cli_config_error_exit_2(tmp_path):
    job = _write_job(tmp_path, FLAT_JOB.replace("feedrate: 5000", "feedrate: -1"))
    assert main(["plan", str(job), "--out-dir", str(tmp_path)]) == 2
    assert main(["plan", str(tmp_path / "missing.yaml")]) == 2


def test_cli_geometry_error_exit_3(tmp_path):
    # zero tilt with a filleted cutter leaves the contact point undefined
    text = FLAT_JOB.replace("plane_angle: 0}", "plane_angle: 0, base_tilt: 0}")
    assert main(["plan", str(_write_job(tmp_path, text)), "--out-dir", str(tmp_path)]) == 3


def test_cli_unreachable_exit_4(tmp_path, caplog):
    text = FLAT_JOB + "machine: {x_range: [-5, 5]}\n"
    assert main(["plan", str(_write_job(tmp_path, text)), "--out-dir", str(tmp_path)]) == 4
    assert "path " in caplog.text and "sample " in caplog.text


def test_cli_strict_exit_5(tmp_path):
    text = FLAT_JOB.replace("plane_angle: 0}", "plane_angle: 0, base_tilt: 30}") + "machine: {velocity_limits: {Y: 100}}\n"
    job = _write_job(tmp_path, text)
    assert main(["plan", str(job), "--out-dir", str(tmp_path), "--no-optimize"]) == 0
    assert main(["plan", str(job), "--out-dir", str(tmp_path), "--no-optimize", "--strict"]) == 5
