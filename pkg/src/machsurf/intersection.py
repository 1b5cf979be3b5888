"""Plane/surface intersection by boundary seeding and predictor-corrector marching."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .surface import Surface

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10  # mm, plane distance after Newton projection
SCAN_DIVISIONS = 200


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "normal", n / np.linalg.norm(n))

    def distance(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p) - self.point) @ self.normal


@dataclass
class PlaneCurve:
    plane: Plane
    params: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    degenerate: bool = False

    def __len__(self):
        return len(self.params)

    @property
    def is_empty(self) -> bool:
        return len(self.params) < 2

    def arc_lengths(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def reversed(self) -> "PlaneCurve":
        return PlaneCurve(self.plane, self.params[::-1].copy(), self.points[::-1].copy(), self.degenerate)


def _g(surface: Surface, plane: Plane, uv):
    d = surface._derivatives(np.asarray(uv[0]), np.asarray(uv[1]))
    g = float(plane.distance(d.point))
    grad = np.array([d.du @ plane.normal, d.dv @ plane.normal])
    return g, grad, d


def project_to_curve(surface: Surface, plane: Plane, uv, max_iter: int = 30):
    """Newton projection of ``uv`` onto ``{g = 0}`` using minimum-norm steps.

    Returns the corrected parameters, or ``None`` if Newton fails or a zero
    gradient is hit (tangential contact).
    """
    uv = np.array(uv, dtype=float)
    for _ in range(max_iter):
        g, grad, _ = _g(surface, plane, uv)
        if abs(g) <= RESIDUAL_TOL:
            return uv
        gg = grad @ grad
        if gg < 1e-24:
            return None
        uv = uv - g * grad / gg
    g, _, _ = _g(surface, plane, uv)
    return uv if abs(g) <= RESIDUAL_TOL else None


def project_batch(surface: Surface, plane: Plane, uv, max_iter: int = 30):
    """Vectorised ``project_to_curve``; returns ``(uv, converged_mask)``."""
    uv = np.array(uv, dtype=float).reshape(-1, 2)
    ok = np.zeros(len(uv), dtype=bool)
    for _ in range(max_iter + 1):
        d = surface._derivatives(uv[:, 0], uv[:, 1])
        g = plane.distance(d.point)
        ok = np.abs(g) <= RESIDUAL_TOL
        if ok.all():
            break
        grad = np.column_stack([d.du @ plane.normal, d.dv @ plane.normal])
        gg = np.sum(grad * grad, axis=1)
        live = ~ok & (gg >= 1e-24)
        if not live.any():
            break
        uv[live] -= (g[live] / gg[live])[:, None] * grad[live]
    return uv, ok


def _boundary_seeds(surface: Surface, plane: Plane) -> list[np.ndarray]:
    (u0, u1), (v0, v1) = surface.domain
    edges = [
        (lambda s: (s, v0), u0, u1),
        (lambda s: (u1, s), v0, v1),
        (lambda s: (s, v1), u1, u0),
        (lambda s: (u0, s), v1, v0),
    ]
    seeds: list[np.ndarray] = []
    for edge, s0, s1 in edges:
        ss = np.linspace(s0, s1, SCAN_DIVISIONS + 1)
        uv = np.array([edge(s) for s in ss])
        g = plane.distance(surface._derivatives(uv[:, 0], uv[:, 1]).point)

        def gfun(s, edge=edge):
            p = surface._derivatives(*map(np.asarray, edge(s))).point
            return float(plane.distance(p))

        for i in range(SCAN_DIVISIONS):
            if g[i] == 0.0:
                seeds.append(np.array(edge(ss[i])))
            elif g[i] * g[i + 1] < 0:
                a, b = sorted((ss[i], ss[i + 1]))
                ga, gb = gfun(a), gfun(b)
                if ga * gb < 0:
                    s = brentq(gfun, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                else:
                    s = a if abs(ga) <= abs(gb) else b
                seeds.append(np.array(edge(s)))
    # corners appear on two edges
    unique: list[np.ndarray] = []
    for s in seeds:
        if not any(np.allclose(s, t, atol=1e-12) for t in unique):
            unique.append(s)
    return unique


def _inside(surface: Surface, uv, slack=0.0) -> bool:
    (u0, u1), (v0, v1) = surface.domain
    return u0 - slack <= uv[0] <= u1 + slack and v0 - slack <= uv[1] <= v1 + slack


def _chord_deviation(surface, plane, a_uv, b_uv, a_pt, b_pt) -> float | None:
    mid = project_to_curve(surface, plane, 0.5 * (a_uv + b_uv))
    if mid is None:
        return None
    m = surface._derivatives(*map(np.asarray, mid)).point
    chord = b_pt - a_pt
    cl = np.linalg.norm(chord)
    if cl == 0:
        return float(np.linalg.norm(m - a_pt))
    w = m - a_pt
    return float(np.linalg.norm(w - (w @ chord) / (cl * cl) * chord))


def _march(surface, plane, seed, seeds, used, chord_tol, max_step):
    """March from a boundary seed to the next boundary exit."""
    params = [seed.copy()]
    _, _, d = _g(surface, plane, seed)
    points = [d.point.copy()]
    (u0, u1), (v0, v1) = surface.domain
    center = np.array(surface.center)
    uv = seed.copy()
    step = min(max_step, 10 * chord_tol ** 0.5)
    prev_dir = None
    degenerate = False
    for _ in range(200000):
        g, grad, d = _g(surface, plane, uv)
        tau = np.array([-grad[1], grad[0]])
        if np.linalg.norm(tau) < 1e-14:
            degenerate = True
            break
        if prev_dir is None:
            if tau @ (center - uv) < 0:
                tau = -tau
        elif tau @ prev_dir < 0:
            tau = -tau
        speed = np.linalg.norm(d.du * tau[0] + d.dv * tau[1])
        tau = tau / speed
        while True:
            trial = uv + step * tau
            if not _inside(surface, trial, slack=1e-9):
                break
            nxt = project_to_curve(surface, plane, trial)
            if nxt is None or not _inside(surface, nxt, slack=1e-9):
                step *= 0.5
                if step < 1e-9:
                    degenerate = True
                    break
                continue
            p = surface._derivatives(*map(np.asarray, nxt)).point
            dev = _chord_deviation(surface, plane, uv, nxt, points[-1], p)
            if dev is None or dev > chord_tol:
                step *= 0.5
                if step < 1e-9:
                    degenerate = True
                    break
                continue
            params.append(nxt)
            points.append(p)
            prev_dir = nxt - uv
            uv = nxt
            if dev < 0.25 * chord_tol:
                step = min(max_step, step * 1.5)
            break
        if degenerate:
            break
        if not _inside(surface, uv + step * tau, slack=1e-9):
            # close the branch on the nearest unused boundary seed ahead
            best, best_d = None, math.inf
            for i, s in enumerate(seeds):
                if used[i]:
                    continue
                dd = np.linalg.norm(s - uv)
                ahead = (s - uv) @ tau >= -1e-12
                if ahead and dd < best_d:
                    best, best_d = i, dd
            if best is None:
                break
            if best_d > 1e-12 * max(1.0, u1 - u0):
                end = seeds[best]
                ep = surface._derivatives(*map(np.asarray, end)).point
                dev = _chord_deviation(surface, plane, uv, end, points[-1], ep)
                if dev is not None and dev > chord_tol and best_d > 1e-9:
                    # too far for one chord: take a shorter step toward it
                    step = 0.5 * min(step, np.linalg.norm(ep - points[-1]))
                    if _inside(surface, uv + step * tau, slack=1e-9):
                        continue
                params.append(end.copy())
                points.append(ep)
            used[best] = True
            break
    return np.array(params), np.array(points), degenerate


def plane_intersection_all(
    surface: Surface, plane: Plane, chord_tol: float, max_step: float = 5.0
) -> list[PlaneCurve]:
    """All boundary-to-boundary branches of the plane/surface intersection.

    Closed interior loops are not detected.
    """
    seeds = _boundary_seeds(surface, plane)
    used = [False] * len(seeds)
    curves = []
    for i, seed in enumerate(seeds):
        if used[i]:
            continue
        used[i] = True
        params, points, degenerate = _march(surface, plane, seed, seeds, used, chord_tol, max_step)
        if degenerate:
            log.warning("degenerate intersection curve (tangential contact) for plane %s", plane.normal)
        curves.append(PlaneCurve(plane, params, points, degenerate))
    return curves


def plane_intersection(
    surface: Surface, plane: Plane, chord_tol: float, max_step: float = 5.0
) -> PlaneCurve:
    """Longest intersection branch; an empty curve when the plane misses."""
    curves = [c for c in plane_intersection_all(surface, plane, chord_tol, max_step) if not c.is_empty]
    if not curves:
        return PlaneCurve(plane)
    return max(curves, key=lambda c: c.arc_lengths()[-1])
