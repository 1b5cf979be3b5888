"""Parametric surfaces, normals, curvature and local machining frames.

All evaluators broadcast over array-valued ``u`` and ``v``; vector results
carry a trailing axis of length 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import BSpline

from .errors import DomainError, FrameError, SingularGeometryError

_DOMAIN_SLACK = 1e-12


class Derivatives(NamedTuple):
    point: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    duu: np.ndarray
    duv: np.ndarray
    dvv: np.ndarray


@dataclass(frozen=True)
class LocalFrame:
    """Feed direction ``f``, outward normal ``n`` and ``t = f x n``."""

    f: np.ndarray
    n: np.ndarray
    t: np.ndarray


class Surface:
    """Base class: subclasses provide ``domain`` and ``_derivatives``."""

    domain: tuple[tuple[float, float], tuple[float, float]]
    _orientation: float = 1.0

    def _derivatives(self, u: np.ndarray, v: np.ndarray) -> Derivatives:
        raise NotImplementedError

    def check_domain(self, u, v) -> None:
        (u0, u1), (v0, v1) = self.domain
        su = _DOMAIN_SLACK * max(1.0, u1 - u0)
        sv = _DOMAIN_SLACK * max(1.0, v1 - v0)
        u = np.asarray(u)
        v = np.asarray(v)
        if np.any(u < u0 - su) or np.any(u > u1 + su) or np.any(v < v0 - sv) or np.any(v > v1 + sv):
            raise DomainError(f"parameters outside domain {self.domain}")

    def derivatives(self, u, v) -> Derivatives:
        self.check_domain(u, v)
        return self._derivatives(np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    @property
    def center(self) -> tuple[float, float]:
        (u0, u1), (v0, v1) = self.domain
        return 0.5 * (u0 + u1), 0.5 * (v0 + v1)

    def _fix_orientation(self) -> None:
        d = self._derivatives(*map(np.asarray, self.center))
        nz = np.cross(d.du, d.dv)[..., 2]
        # frozen dataclasses: bypass __setattr__
        object.__setattr__(self, "_orientation", -1.0 if nz < 0 else 1.0)

    def xy_bounds(self, samples: int = 65) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned XY bounding box of the surface image (sampled)."""
        (u0, u1), (v0, v1) = self.domain
        uu, vv = np.meshgrid(np.linspace(u0, u1, samples), np.linspace(v0, v1, samples))
        p = self._derivatives(uu, vv).point
        return p[..., :2].reshape(-1, 2).min(axis=0), p[..., :2].reshape(-1, 2).max(axis=0)


@dataclass(frozen=True)
class AnalyticSaddle(Surface):
    """Hyperbolic paraboloid ``z = c * (x'/a) * (y'/b)`` over ``[-a, a] x [-b, b]``.

    ``(x', y')`` are the XY coordinates rotated by ``rotation`` degrees about
    Z; with ``rotation = 0`` this is ``z = (x/a)(y/b)c``. Parameters are
    ``u = x/a`` and ``v = y/b`` on ``[-1, 1]^2``.
    """

    a: float = 50.0
    b: float = 50.0
    c: float = 20.0
    rotation: float = 0.0
    domain: tuple = ((-1.0, 1.0), (-1.0, 1.0))

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("saddle half-extents must be positive")
        self._fix_orientation()

    def _derivatives(self, u, v):
        a, b = self.a, self.b
        k = self.c / (a * b)
        cs, sn = np.cos(np.radians(self.rotation)), np.sin(np.radians(self.rotation))
        x, y = a * u, b * v
        xr = x * cs + y * sn
        yr = -x * sn + y * cs
        z = k * xr * yr
        zu = k * a * (cs * yr - sn * xr)
        zv = k * b * (sn * yr + cs * xr)
        zuu = -2.0 * k * a * a * cs * sn
        zvv = 2.0 * k * b * b * sn * cs
        zuv = k * a * b * (cs * cs - sn * sn)
        if np.ndim(z) == 0:
            # scalar fast path for the marching loops
            return Derivatives(
                np.array([x, y, z], dtype=float),
                np.array([a, 0.0, zu]),
                np.array([0.0, b, zv]),
                np.array([0.0, 0.0, zuu]),
                np.array([0.0, 0.0, zuv]),
                np.array([0.0, 0.0, zvv]),
            )
        zero = np.zeros_like(z)

        def vec(px, py, pz):
            return np.stack(np.broadcast_arrays(px, py, pz), axis=-1).astype(float)

        return Derivatives(
            vec(x, y, z), vec(a, zero, zu), vec(zero, b, zv),
            vec(zero, zero, zuu), vec(zero, zero, zuv), vec(zero, zero, zvv),
        )


def _clamped_knots(n_ctrl: int, degree: int) -> np.ndarray:
    interior = np.linspace(0.0, 1.0, n_ctrl - degree + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


@dataclass(frozen=True, eq=False)
class PolynomialPatch(Surface):
    """Tensor-product clamped uniform B-spline patch on ``[0, 1]^2``.

    A net of ``(p + 1) x (q + 1)`` points is a Bezier patch.
    """

    control_net: np.ndarray
    degrees: tuple[int, int] = (3, 3)
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))
    _bases: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        net = np.asarray(self.control_net, dtype=float)
        if net.ndim != 3 or net.shape[2] != 3:
            raise ValueError("control net must be a rectangular grid of 3D points")
        p, q = self.degrees
        nu, nv = net.shape[:2]
        if not (1 <= p < nu and 1 <= q < nv):
            raise ValueError(f"degrees {self.degrees} incompatible with a {nu}x{nv} net")
        object.__setattr__(self, "control_net", net)
        bu = BSpline(_clamped_knots(nu, p), np.eye(nu), p)
        bv = BSpline(_clamped_knots(nv, q), np.eye(nv), q)
        object.__setattr__(self, "_bases", (bu, bv))
        self._fix_orientation()

    @staticmethod
    def _basis(spl: BSpline, x: np.ndarray, order: int) -> np.ndarray:
        xc = np.clip(x, 0.0, 1.0)
        if order > spl.k:
            return np.zeros(np.shape(xc) + (spl.c.shape[1],))
        return spl(xc) if order == 0 else spl.derivative(order)(xc)

    def _derivatives(self, u, v):
        bu, bv = self._bases
        net = self.control_net
        Bu = [self._basis(bu, u, k) for k in range(3)]
        Bv = [self._basis(bv, v, k) for k in range(3)]

        def tp(i, j):
            return np.einsum("...i,ijk,...j->...k", Bu[i], net, Bv[j])

        return Derivatives(tp(0, 0), tp(1, 0), tp(0, 1), tp(2, 0), tp(1, 1), tp(0, 2))


def evaluate(surface: Surface, u, v) -> Derivatives:
    """Point and first/second partial derivatives at ``(u, v)``."""
    return surface.derivatives(u, v)


def _unit_normal(surface: Surface, d: Derivatives) -> np.ndarray:
    cr = np.cross(d.du, d.dv)
    norm = np.linalg.norm(cr, axis=-1)
    scale = np.linalg.norm(d.du, axis=-1) * np.linalg.norm(d.dv, axis=-1)
    if np.any(norm <= 1e-14 * scale) or np.any(scale == 0):
        raise SingularGeometryError("degenerate tangent plane")
    return surface._orientation * cr / norm[..., None]


def normal(surface: Surface, u, v) -> np.ndarray:
    """Unit outward normal (positive Z at the domain center)."""
    return _unit_normal(surface, surface.derivatives(u, v))


def frame_from_normal(n: np.ndarray, feed: np.ndarray) -> LocalFrame:
    """Project ``feed`` onto the plane normal to ``n`` and complete the frame."""
    feed = np.asarray(feed, dtype=float)
    f = feed - np.sum(feed * n, axis=-1, keepdims=True) * n
    fn = np.linalg.norm(f, axis=-1)
    if np.any(fn <= 1e-12 * np.linalg.norm(feed, axis=-1)):
        raise FrameError("feed direction parallel to surface normal")
    f = f / fn[..., None]
    return LocalFrame(f=f, n=n, t=np.cross(f, n))


def local_frame(surface: Surface, u, v, feed_dir) -> LocalFrame:
    return frame_from_normal(normal(surface, u, v), feed_dir)


def normal_curvature(surface: Surface, u, v, tangent_dir) -> np.ndarray:
    """Signed normal curvature in 1/mm along a 3D tangent direction.

    Sign: negative where the surface is concave toward the tool (the side the
    outward normal points to).
    """
    d = surface.derivatives(u, v)
    n = _unit_normal(surface, d)
    tangent_dir = np.asarray(tangent_dir, dtype=float)
    # express the direction in (du, dv) via the 2x2 normal equations
    E = np.sum(d.du * d.du, axis=-1)
    F = np.sum(d.du * d.dv, axis=-1)
    G = np.sum(d.dv * d.dv, axis=-1)
    bu = np.sum(d.du * tangent_dir, axis=-1)
    bv = np.sum(d.dv * tangent_dir, axis=-1)
    det = E * G - F * F
    if np.any(det <= 0):
        raise SingularGeometryError("degenerate first fundamental form")
    a = (G * bu - F * bv) / det
    b = (E * bv - F * bu) / det
    first = E * a * a + 2 * F * a * b + G * b * b
    if np.any(first <= 0):
        raise SingularGeometryError("zero tangent direction")
    L = np.sum(d.duu * n, axis=-1)
    M = np.sum(d.duv * n, axis=-1)
    N = np.sum(d.dvv * n, axis=-1)
    second = L * a * a + 2 * M * a * b + N * b * b
    return -second / first
