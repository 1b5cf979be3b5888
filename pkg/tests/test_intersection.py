import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from machsurf.intersection import Plane, plane_intersection, plane_intersection_all, project_batch
from machsurf.surface import AnalyticSaddle, evaluate


def _diag_plane():
    return Plane([0, 0, 0], [1, -1, 0])


def test_diagonal_plane_on_saddle():
    s = AnalyticSaddle()
    c = plane_intersection(s, _diag_plane(), 0.01)
    ends = sorted([tuple(np.round(c.points[0], 9)), tuple(np.round(c.points[-1], 9))])
    assert np.allclose(ends, [(-50, -50, 20), (50, 50, 20)])
    # on x = y the saddle is the parabola z = x^2 c/(ab)
    assert np.allclose(c.points[:, 2], c.points[:, 0] ** 2 * 20 / 2500, atol=1e-9)
    assert np.abs(_diag_plane().distance(c.points)).max() < 1e-9


def test_axis_plane_gives_straight_ruling():
    c = plane_intersection(AnalyticSaddle(), Plane([0, 0, 0], [1, 0, 0]), 0.01)
    assert np.allclose(c.points[:, 2], 0.0, atol=1e-9)
    assert np.isclose(c.arc_lengths()[-1], 100.0)


def test_plane_outside_gives_empty_curve():
    c = plane_intersection(AnalyticSaddle(), Plane([0, 0, 100], [0, 0, 1]), 0.01)
    assert c.is_empty


def test_horizontal_plane_through_center_gives_two_rulings():
    curves = [c for c in plane_intersection_all(AnalyticSaddle(), Plane([0, 0, 0], [0, 0, 1]), 0.01) if not c.is_empty]
    assert len(curves) == 2
    for c in curves:
        assert np.allclose(c.points[:, 2], 0, atol=1e-9)


def test_project_batch_converges():
    s = AnalyticSaddle(rotation=45)
    plane = Plane([3, 0, 0], [1, 1, 0])
    uv, ok = project_batch(s, plane, np.random.default_rng(1).uniform(-0.8, 0.8, (50, 2)))
    assert ok.all()
    assert np.abs(plane.distance(evaluate(s, uv[:, 0], uv[:, 1]).point)).max() < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 180), st.floats(-60, 60), st.floats(0, 90))
def test_vertical_planes_stay_on_plane_and_surface(angle, offset, rot):
    s = AnalyticSaddle(rotation=rot)
    a = np.radians(angle)
    m = np.array([np.cos(a), np.sin(a), 0.0])
    plane = Plane(m * offset, m)
    for c in plane_intersection_all(s, plane, 0.01):
        if c.is_empty:
            continue
        assert np.abs(plane.distance(c.points)).max() < 1e-9
        assert np.allclose(evaluate(s, c.params[:, 0], c.params[:, 1]).point, c.points)


@settings(max_examples=10, deadline=None)
@given(st.floats(-40, 40), st.sampled_from([0.05, 0.01]))
def test_marching_respects_chord_tolerance(offset, tol):
    s = AnalyticSaddle(rotation=45.0)
    m = np.array([-1.0, 1.0, 0.0]) / np.sqrt(2)
    plane = Plane(m * offset, m)
    c = plane_intersection(s, plane, tol)
    # dense oracle: project 10 points per chord and measure distance to it
    for k in range(len(c) - 1):
        t = np.linspace(0, 1, 12)[1:-1]
        guess = (1 - t)[:, None] * c.params[k] + t[:, None] * c.params[k + 1]
        uv, ok = project_batch(s, plane, guess)
        assert ok.all()
        p = evaluate(s, uv[:, 0], uv[:, 1]).point
        a, b = c.points[k], c.points[k + 1]
        ab = b - a
        w = p - a
        dev = np.linalg.norm(w - np.outer(w @ ab / (ab @ ab), ab), axis=1)
        assert dev.max() <= tol * 1.05
