import math

import numpy as np
import pytest
from conftest import flat_patch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from machsurf.errors import NoOverlapError
from machsurf.intersection import project_batch
from machsurf.machining import CutterGeometry, OrientationField, deform_field
from machsurf.planner import (
    MachiningStrategy,
    effective_radius,
    generate,
    gouge_check,
    max_scallop,
    plan_planes,
    scallop_height,
    tighten,
)
from machsurf.surface import AnalyticSaddle, PolynomialPatch, evaluate

TOOL = CutterGeometry(9.0, 1.0)


def test_plane_count_on_saddle_footprint():
    planes = plan_planes(AnalyticSaddle(), MachiningStrategy(plane_angle=45.0, stepover=2.0))
    assert len(planes) == math.ceil(100 * math.sqrt(2) / 2) + 1 == 72
    m = np.array([np.cos(np.radians(135)), np.sin(np.radians(135)), 0])
    offsets = [p.point @ m for p in planes]
    assert all(np.allclose(p.normal, m) for p in planes)
    assert np.allclose(np.diff(offsets), 2.0)


def test_large_stepover_gives_two_planes():
    assert len(plan_planes(AnalyticSaddle(), MachiningStrategy(stepover=500.0))) == 2


def test_zero_angle_planes_parallel_to_x():
    planes = plan_planes(AnalyticSaddle(), MachiningStrategy(plane_angle=0.0))
    assert np.allclose(planes[0].normal, [0, 1, 0])
    assert len(planes) == 51


def test_strategy_validation():
    with pytest.raises(ValueError):
        MachiningStrategy(stepover=0.0)
    with pytest.raises(ValueError):
        MachiningStrategy(scallop_tol=-1.0)


def _flat_job(**kw):
    st = MachiningStrategy(plane_angle=0.0, **kw)
    return generate(flat_patch(), st, TOOL)


def test_flat_surface_constant_tilt():
    tp = _flat_job()
    for p in tp.nonempty():
        assert np.allclose(p.cl[:, 2], 1.0 + 9.0 * np.sin(np.radians(1.0)))
        assert np.allclose(p.axis, p.axis[0])
        assert np.allclose(np.einsum("ij,ij->i", p.axis, p.frame.n), np.cos(np.radians(1.0)))


def test_saddle_axes_keep_tilt_to_normal():
    tp = generate(AnalyticSaddle(rotation=45.0), MachiningStrategy(stepover=6.0), TOOL)
    for p in tp.nonempty():
        assert np.allclose(np.einsum("ij,ij->i", p.axis, p.frame.n), np.cos(np.radians(1.0)))
        assert np.all(np.einsum("ij,ij->i", p.frame.f, p.frame.n) < 1e-12)


def test_paths_ordered_and_zigzag():
    tp = generate(AnalyticSaddle(), MachiningStrategy(stepover=5.0), TOOL)
    offsets = [p.offset for p in tp.paths]
    assert offsets == sorted(offsets)
    full = tp.nonempty()
    d = tp.strategy.drive_direction
    for p in full:
        along = (p.cc[-1] - p.cc[0]) @ d
        assert np.sign(along) == p.direction
        assert np.all(np.einsum("ij,j->i", np.diff(p.cc, axis=0), d) * p.direction > 0)
    assert [p.direction for p in tp.paths] == [1 if i % 2 == 0 else -1 for i in range(len(tp.paths))]


def test_one_way_linking():
    tp = generate(AnalyticSaddle(), MachiningStrategy(stepover=5.0, linking="one-way"), TOOL)
    assert {p.direction for p in tp.nonempty()} == {1}


def test_sample_spacing_and_chord_tolerance_against_dense_oracle():
    s = AnalyticSaddle(rotation=45.0)
    st = MachiningStrategy(stepover=10.0, chord_tol=0.005, max_sample_spacing=3.0)
    tp = generate(s, st, TOOL)
    for p in tp.nonempty():
        seg = np.linalg.norm(np.diff(p.cc, axis=0), axis=1)
        assert seg.max() <= 3.0 + 1e-6
        t = np.linspace(0, 1, 12)[1:-1]
        for k in range(len(p) - 1):
            guess = (1 - t)[:, None] * p.curve.params[k] + t[:, None] * p.curve.params[k + 1]
            uv, ok = project_batch(s, p.curve.plane, guess)
            pts = evaluate(s, uv[:, 0], uv[:, 1]).point
            a, b = p.cc[k], p.cc[k + 1]
            ab = b - a
            w = pts - a
            dev = np.linalg.norm(w - np.outer(w @ ab / (ab @ ab), ab), axis=1)
            assert dev.max() <= st.chord_tol * 1.05


def test_generate_is_deterministic():
    s = AnalyticSaddle(rotation=45.0)
    st = MachiningStrategy(stepover=8.0)
    a = generate(s, st, TOOL)
    b = generate(s, st, TOOL, workers=4)
    for p, q in zip(a.paths, b.paths):
        assert np.array_equal(p.cl, q.cl) and np.array_equal(p.axis, q.axis)


def test_effective_radius_examples():
    assert np.isclose(effective_radius(TOOL, 1.0, 0.0), 516.688, atol=1e-3)
    assert np.isclose(effective_radius(TOOL, 5.0, 0.0), 104.263, atol=1e-3)
    assert np.isclose(effective_radius(TOOL, 90.0, 0.0), 10.0)
    assert math.isinf(effective_radius(TOOL, 0.0, 0.0))


def test_effective_radius_general_equals_simplified_at_zero_yaw():
    tilt = np.random.default_rng(3).uniform(0.01, 90, 100)
    th = np.radians(tilt)
    simple = (9 + np.sin(th)) / np.sin(th)
    assert np.allclose(effective_radius(TOOL, tilt, 0.0), simple, rtol=1e-10)


def test_effective_radius_monotone_in_tilt():
    r = effective_radius(TOOL, np.linspace(0.09, 90, 1000), 0.0)
    assert np.all(np.diff(r) < 0)


def test_effective_radius_full_yaw_is_corner_radius():
    assert np.isclose(effective_radius(TOOL, 3.0, 90.0), 1.0)


def test_scallop_examples():
    assert np.isclose(scallop_height(516, 516, 2), 516 - math.sqrt(516**2 - 1))
    assert np.isclose(scallop_height(516, 516, 2), 0.00097, atol=5e-6)
    assert np.isclose(scallop_height(104, 104, 2), 0.00481, atol=5e-6)
    assert np.isclose(scallop_height(104, 104, 1), 0.0012, atol=5e-5)
    assert scallop_height(104, 104, 1e-9) < 1e-15
    assert scallop_height(math.inf, math.inf, 2) == 0.0


def test_scallop_no_overlap():
    with pytest.raises(NoOverlapError):
        scallop_height(1.0, 1.0, 2.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(5, 600), st.floats(5, 600), st.floats(0.05, 4.0))
def test_scallop_matches_numerical_circle_intersection(r1, r2, s):
    # circles tangent to y = 0 at x = 0 and x = s; find where they cross
    def diff(x):
        return (r1 - math.sqrt(r1 * r1 - x * x)) - (r2 - math.sqrt(r2 * r2 - (s - x) ** 2))

    x = brentq(diff, 0.0, s, xtol=1e-15)
    h = r1 - math.sqrt(r1 * r1 - x * x)
    assert math.isclose(scallop_height(r1, r2, s), h, rel_tol=1e-6, abs_tol=1e-12)
    assert math.isclose(scallop_height(r1, r2, s), scallop_height(r2, r1, s), rel_tol=1e-12)


def test_tighten_without_violation_is_identity():
    tp = _flat_job()
    out = tighten(tp, 0.002)
    assert out.paths == tp.paths
    assert out.insertions == []
    assert tighten(tp, math.inf) is tp


def _deformed_flat(tilt=5.0, hw=0, rows=(15,)):
    tp = _flat_job()
    fld = deform_field(tp.field, [(r, (5, 25)) for r in rows], tilt, blend_halfwidth=hw)
    return generate(tp.surface, tp.strategy, TOOL, fld, curves=tp.curves)


def test_tighten_inserts_one_level_in_deformed_band():
    tp = _deformed_flat(hw=(0, 2), rows=(14, 15, 16))
    # bicubic overshoot at the plateau edge lifts the peak by about 1 %
    assert np.isclose(max_scallop(tp), scallop_height(104.263, 104.263, 2.0), rtol=0.02)
    out = tighten(tp, 0.002)
    assert out.insertions
    coords = sorted(c for c, _ in out.insertions)
    assert coords == [14.5, 15.5]
    # one bisection level suffices; what remains is the 1 deg / 5 deg pair at the band edge
    assert max_scallop(out) <= 0.002
    assert np.isclose(max_scallop(out), scallop_height(516.688, 104.263, 2.0), rtol=0.02)
    inner = [p for p in out.paths if p.partial]
    assert len(inner) == 2 and all(np.median(p.tilt) > 4.9 for p in inner)
    # the fixed passes are untouched
    assert all(any(p is q for q in out.paths) for p in tp.paths)


def test_tighten_reports_residual_when_levels_run_out(caplog):
    tp = _deformed_flat(tilt=15.0, hw=(2, 2))
    out = tighten(tp, 1e-6, max_levels=1)
    assert max_scallop(out) > 1e-6
    assert "residual scallop" in caplog.text


def _trough(rho):
    # z = x^2 / (2 rho) across x, straight along y
    L = 20.0
    zc = L * L / (2 * rho)
    net = np.array(
        [[[-L, -30, zc], [-L, 30, zc]], [[0, -30, -zc], [0, 30, -zc]], [[L, -30, zc], [L, 30, zc]]]
    )
    return PolynomialPatch(net, degrees=(2, 1))


def test_gouge_flags_concave_region_with_large_radius():
    s = _trough(100.0)
    st = MachiningStrategy(plane_angle=90.0, stepover=4.0)
    tp = generate(s, st, TOOL)  # feed along y, R_eq = 516 across
    flags = gouge_check(tp, s)
    center = [p for p in tp.nonempty() if abs(p.cc[0, 0]) < 1e-6]
    assert center and all((center[0].index, j) in flags for j in range(len(center[0])))


def test_gouge_not_flagged_when_radius_fits():
    s = _trough(500.0)
    st = MachiningStrategy(plane_angle=90.0, stepover=4.0, base_tilt=5.0)
    tp = generate(s, st, TOOL)  # R_eq = 104 < 500
    assert gouge_check(tp, s) == []


def test_gouge_none_on_plane():
    tp = _flat_job()
    assert gouge_check(tp, tp.surface) == []


def test_field_shape_must_match_planes():
    tp = _flat_job()
    with pytest.raises(ValueError):
        generate(tp.surface, tp.strategy, TOOL, OrientationField.constant(3, 3, 1.0), curves=tp.curves)
