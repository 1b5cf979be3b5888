"""Kinematics of an RRTTT table-tilting machine (A cradle carrying a C table).

Chain, part frame to machine frame::

    M = o_AM + Rx(A) (o_CA + Rz(C) (R_s p + t_s))

where ``(R_s, t_s)`` is the part setup. The tool axis is machine +Z, so the
part-frame axis satisfies ``Rx(A) Rz(C) R_s u = z``. The controlled tool
point is the axis point C_L. Angles are in degrees; C is kept unwound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import UnreachablePoseError

AXES = ("X", "Y", "Z", "A", "C")


class JointPose(NamedTuple):
    X: float
    Y: float
    Z: float
    A: float
    C: float


class PartPose(NamedTuple):
    p: np.ndarray
    u: np.ndarray


@dataclass(frozen=True, eq=False)
class MachineModel:
    x_range: tuple[float, float] = (-1000.0, 1000.0)
    y_range: tuple[float, float] = (-1000.0, 1000.0)
    z_range: tuple[float, float] = (-1000.0, 1000.0)
    a_range: tuple[float, float] = (-30.0, 120.0)
    c_range: Optional[tuple[float, float]] = None
    # mm/min for X, Y, Z; rpm for A, C
    velocity_limits: tuple[float, float, float, float, float] = (30000.0, 30000.0, 30000.0, 15.0, 20.0)
    o_ca: np.ndarray = field(default_factory=lambda: np.zeros(3))
    o_am: np.ndarray = field(default_factory=lambda: np.zeros(3))
    setup_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    setup_rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    singular_threshold: float = 0.1

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range", "a_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} is empty")
        if self.c_range is not None and not self.c_range[0] < self.c_range[1]:
            raise ValueError("c_range is empty")
        if any(v <= 0 for v in self.velocity_limits):
            raise ValueError("velocity limits must be positive")
        for name in ("o_ca", "o_am", "setup_position"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        rs = Rotation.from_euler("xyz", self.setup_rotation, degrees=True).as_matrix()
        object.__setattr__(self, "_rs", rs)

    @property
    def setup_matrix(self) -> np.ndarray:
        return self._rs


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    one, zero = np.ones_like(a), np.zeros_like(a)
    return np.stack(
        [np.stack([one, zero, zero], -1), np.stack([zero, c, -s], -1), np.stack([zero, s, c], -1)], -2
    )


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    one, zero = np.ones_like(a), np.zeros_like(a)
    return np.stack(
        [np.stack([c, -s, zero], -1), np.stack([s, c, zero], -1), np.stack([zero, zero, one], -1)], -2
    )


def forward(joints, machine: MachineModel) -> PartPose:
    """Part-frame axis point and tool axis for joint values ``(..., 5)``."""
    q = np.asarray(joints, dtype=float)
    a = np.radians(q[..., 3])
    c = np.radians(q[..., 4])
    rxt = np.swapaxes(_rx(a), -1, -2)
    rzt = np.swapaxes(_rz(c), -1, -2)
    m = q[..., :3] - machine.o_am
    table = np.einsum("...ij,...j->...i", rzt, np.einsum("...ij,...j->...i", rxt, m) - machine.o_ca)
    p = (table - machine.setup_position) @ machine.setup_matrix
    z = np.broadcast_to([0.0, 0.0, 1.0], q.shape[:-1] + (3,))
    u = np.einsum("...ij,...j->...i", rzt, np.einsum("...ij,...j->...i", rxt, z)) @ machine.setup_matrix
    return PartPose(p, u)


def orientation_candidates(u_table) -> list[tuple[float, float]]:
    """Both ``(A, C)`` solutions of ``Rx(A) Rz(C) u = z`` (degrees)."""
    ux, uy, uz = u_table
    a = math.degrees(math.atan2(math.hypot(ux, uy), uz))
    c = math.degrees(math.atan2(ux, uy))
    return [(a, c), (-a, c + 180.0)]


def _unwind(c: float, ref: float) -> float:
    return c + 360.0 * round((ref - c) / 360.0)


def _a_ok(a: float, machine: MachineModel) -> bool:
    lo, hi = machine.a_range
    return lo - 1e-9 <= a <= hi + 1e-9


def _c_ok(c: float, machine: MachineModel) -> bool:
    if machine.c_range is None:
        return True
    lo, hi = machine.c_range
    return lo - 1e-9 <= c <= hi + 1e-9


def select_branch(cands, prev: Optional[JointPose], machine: MachineModel) -> tuple[float, float]:
    """Pick the in-range candidate with the smallest rotary move.

    With a previous pose the metric is ``max(|dA|, |dC|)`` after unwinding C;
    without one it is ``|A|`` and ties go to positive A.
    """
    options = []
    for a, c in cands:
        if prev is not None:
            c = _unwind(c, prev.C)
        if _a_ok(a, machine) and _c_ok(c, machine):
            options.append((a, c))
    if not options:
        raise UnreachablePoseError("no orientation solution within the rotary axis ranges")
    if prev is None:
        return min(options, key=lambda ac: (abs(ac[0]), -ac[0]))
    return min(options, key=lambda ac: (max(abs(ac[0] - prev.A), abs(ac[1] - prev.C)), -ac[0]))


def singularity_guard(u_table, prev: Optional[JointPose], threshold_deg: float):
    """Held-C solution near the vertical, or ``None`` outside the singular cone.

    Inside the cone C keeps its previous value and A takes the signed tilt
    of ``u`` in that C azimuth.
    """
    ux, uy, uz = u_table
    if math.degrees(math.atan2(math.hypot(ux, uy), uz)) >= threshold_deg:
        return None
    c = prev.C if prev is not None else 0.0
    cr, sr = math.cos(math.radians(c)), math.sin(math.radians(c))
    y = sr * ux + cr * uy
    return math.degrees(math.atan2(y, uz)), c


def _translations(p, a: float, c: float, machine: MachineModel) -> np.ndarray:
    table = machine.setup_matrix @ np.asarray(p, dtype=float) + machine.setup_position
    ca, sa = math.cos(math.radians(a)), math.sin(math.radians(a))
    cc, sc = math.cos(math.radians(c)), math.sin(math.radians(c))
    x, y, z = table
    x, y = cc * x - sc * y, sc * x + cc * y
    x, y, z = x + machine.o_ca[0], y + machine.o_ca[1], z + machine.o_ca[2]
    y, z = ca * y - sa * z, sa * y + ca * z
    return np.array([x, y, z]) + machine.o_am


def inverse(pose: PartPose, machine: MachineModel, prev: Optional[JointPose] = None) -> tuple[JointPose, bool]:
    """Joint values for a part-frame pose; the flag marks the singular (held-C) zone."""
    u = np.asarray(pose.u, dtype=float)
    u = u / np.linalg.norm(u)
    u_table = machine.setup_matrix @ u
    held = singularity_guard(u_table, prev, machine.singular_threshold)
    if held is not None:
        a, c = held
        if not _a_ok(a, machine):
            raise UnreachablePoseError(f"A={a:.4f} outside range in the singular zone")
        singular = True
    else:
        a, c = select_branch(orientation_candidates(u_table), prev, machine)
        singular = False
    xyz = _translations(pose.p, a, c, machine)
    for val, (lo, hi), name in zip(xyz, (machine.x_range, machine.y_range, machine.z_range), "XYZ"):
        if not lo <= val <= hi:
            raise UnreachablePoseError(f"{name}={val:.4f} outside range [{lo}, {hi}]")
    return JointPose(float(xyz[0]), float(xyz[1]), float(xyz[2]), a, c), singular


def _translations_batch(p, a, c, machine: MachineModel) -> np.ndarray:
    table = np.asarray(p, dtype=float) @ machine.setup_matrix.T + machine.setup_position
    ar, cr = np.radians(a), np.radians(c)
    ca, sa, cc, sc = np.cos(ar), np.sin(ar), np.cos(cr), np.sin(cr)
    x = cc * table[:, 0] - sc * table[:, 1] + machine.o_ca[0]
    y = sc * table[:, 0] + cc * table[:, 1] + machine.o_ca[1]
    z = table[:, 2] + machine.o_ca[2]
    return np.column_stack([x, ca * y - sa * z, sa * y + ca * z]) + machine.o_am


def inverse_path(points, axes, machine: MachineModel, prev: Optional[JointPose] = None):
    """Sequential IKT along a path; returns ``(joints (n, 5), singular (n,))``.

    Same result as calling :func:`inverse` pose by pose; only the branch
    choice runs in the Python loop.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    axes = np.asarray(axes, dtype=float).reshape(-1, 3)
    n = len(points)
    u_table = (axes / np.linalg.norm(axes, axis=1, keepdims=True)) @ machine.setup_matrix.T
    a_all = np.zeros(n)
    c_all = np.zeros(n)
    singular = np.zeros(n, dtype=bool)
    for i, ut in enumerate(u_table.tolist()):
        held = singularity_guard(ut, prev, machine.singular_threshold)
        if held is not None:
            a, c = held
            if not _a_ok(a, machine):
                raise UnreachablePoseError(f"A={a:.4f} outside range in the singular zone", i)
            singular[i] = True
        else:
            try:
                a, c = select_branch(orientation_candidates(ut), prev, machine)
            except UnreachablePoseError as exc:
                raise UnreachablePoseError(str(exc), i) from None
        a_all[i], c_all[i] = a, c
        prev = JointPose(0.0, 0.0, 0.0, a, c)
    xyz = _translations_batch(points, a_all, c_all, machine)
    for k, ((lo, hi), name) in enumerate(zip((machine.x_range, machine.y_range, machine.z_range), "XYZ")):
        bad = np.nonzero((xyz[:, k] < lo) | (xyz[:, k] > hi))[0]
        if len(bad):
            raise UnreachablePoseError(f"{name}={xyz[bad[0], k]:.4f} outside range [{lo}, {hi}]", int(bad[0]))
    return np.column_stack([xyz, a_all, c_all]), singular


def _chord_sum(q0, q1, machine, n_sub):
    s = np.linspace(0.0, 1.0, n_sub + 1)
    q = q0[..., None, :] + s[:, None] * (q1 - q0)[..., None, :]
    p = forward(q, machine).p
    return np.linalg.norm(np.diff(p, axis=-2), axis=-1).sum(axis=-1)


def relative_path_length(q0, q1, machine: MachineModel, n_sub: int = 16, refine: bool = True):
    """Length of the part-relative path of C_L under joint-linear interpolation.

    Chord sum over ``n_sub`` steps; with ``refine`` one Richardson step
    combines ``n_sub`` and ``2 n_sub``.
    """
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    coarse = _chord_sum(q0, q1, machine, n_sub)
    if not refine:
        return coarse
    fine = _chord_sum(q0, q1, machine, 2 * n_sub)
    return fine + (fine - coarse) / 3.0
