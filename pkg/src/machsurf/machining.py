"""Machining-surface model: tool axis, guide point K, axis point C_L and the tilt field.

The guiding surface is the locus of ``K = C_C + r n``; the orientation
surface is the locus of ``C_L``. The tool axis is fixed by a tilt field
defined on the (path, sample) grid of the tool path.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import AxisSingularityError, DomainError
from .surface import LocalFrame


@dataclass(frozen=True)
class CutterGeometry:
    """Filleted end mill: ``R`` axis-to-tube-centre distance, ``r`` corner radius."""

    R: float = 9.0
    r: float = 1.0

    def __post_init__(self):
        if self.R <= 0 or self.r < 0:
            raise ValueError("cutter requires R > 0 and r >= 0")

    @property
    def shank_radius(self) -> float:
        return self.R + self.r


@dataclass(frozen=True, eq=False)
class CutterLocation:
    cc: np.ndarray
    frame: LocalFrame
    tilt: float
    yaw: float
    axis: np.ndarray
    k: np.ndarray
    cl: np.ndarray
    param: tuple[float, float]


def tool_axis(frame: LocalFrame, tilt, yaw=0.0) -> np.ndarray:
    """Unit tool axis leaning ``tilt`` degrees off ``n`` toward ``f``, turned by ``yaw`` about ``n``."""
    th = np.radians(np.asarray(tilt, dtype=float))[..., None]
    ps = np.radians(np.asarray(yaw, dtype=float))[..., None]
    return np.cos(th) * frame.n + np.sin(th) * (np.cos(ps) * frame.f + np.sin(ps) * frame.t)


def guide_point(cc, n, r: float) -> np.ndarray:
    return np.asarray(cc, dtype=float) + r * np.asarray(n, dtype=float)


def axis_point(cc, n, u, tool: CutterGeometry) -> np.ndarray:
    """Point ``C_L`` of the tool axis in the plane of the corner-torus tube centres.

    The contact tube centre ``K`` lies at ``C_L - R w`` where ``w`` is the
    unit radial direction with ``w . n < 0``; hence
    ``C_L = K + R * normalize(n - (n.u) u)``.
    """
    n = np.asarray(n, dtype=float)
    u = np.asarray(u, dtype=float)
    k = guide_point(cc, n, tool.r)
    radial = n - np.sum(n * u, axis=-1, keepdims=True) * u
    norm = np.linalg.norm(radial, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise AxisSingularityError("tool axis parallel to the surface normal: contact point undefined")
    return k + tool.R * radial / norm


def _blend_weight(d: np.ndarray, halfwidth: int) -> np.ndarray:
    w = np.where(d == 0, 1.0, 0.0)
    if halfwidth > 0:
        ramp = 0.5 * (1.0 + np.cos(np.pi * d / (halfwidth + 1)))
        w = np.where((d > 0) & (d <= halfwidth), ramp, w)
    return w


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    t2, t3 = t * t, t * t * t
    return np.stack(
        [
            0.5 * (-t3 + 2 * t2 - t),
            0.5 * (3 * t3 - 5 * t2 + 2),
            0.5 * (-3 * t3 + 4 * t2 + t),
            0.5 * (t3 - t2),
        ],
        axis=-1,
    )


def _pad(values: np.ndarray, axis: int) -> np.ndarray:
    first = np.take(values, [0], axis=axis)
    last = np.take(values, [-1], axis=axis)
    if values.shape[axis] >= 2:
        lo = 2 * first - np.take(values, [1], axis=axis)
        hi = 2 * last - np.take(values, [-2], axis=axis)
    else:
        lo, hi = first, last
    return np.concatenate([lo, values, hi], axis=axis)


@dataclass(frozen=True, eq=False)
class OrientationField:
    """Tilt control values (degrees) on an ``n_paths x n_samples`` grid.

    Interpolation is bicubic Catmull-Rom in grid coordinates, which is C1
    and reproduces node values.
    """

    values: np.ndarray
    base_tilt: float = 1.0
    yaw: float = 0.0
    tilt_min: float = 0.5
    tilt_max: float = 15.0
    _padded: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or min(vals.shape) < 1:
            raise ValueError("field grid must be a non-empty 2D array")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_padded", _pad(_pad(vals, 0), 1))

    @classmethod
    def constant(cls, n_paths: int, n_samples: int, tilt: float, **kw) -> "OrientationField":
        return cls(np.full((n_paths, n_samples), float(tilt)), base_tilt=tilt, **kw)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def tilt(self, path, sample) -> np.ndarray:
        p = np.asarray(path, dtype=float)
        s = np.asarray(sample, dtype=float)
        n_p, n_s = self.shape
        if np.any(p < -1e-9) or np.any(p > n_p - 1 + 1e-9) or np.any(s < -1e-9) or np.any(s > n_s - 1 + 1e-9):
            raise DomainError("field query outside the grid")
        p = np.clip(p, 0, n_p - 1)
        s = np.clip(s, 0, n_s - 1)
        ip = np.clip(np.floor(p).astype(int), 0, max(n_p - 2, 0))
        is_ = np.clip(np.floor(s).astype(int), 0, max(n_s - 2, 0))
        wp = _catmull_rom_weights(p - ip)
        ws = _catmull_rom_weights(s - is_)
        out = np.zeros(np.broadcast(p, s).shape)
        for a in range(4):
            rows = np.minimum(ip + a, n_p + 1)
            for b in range(4):
                cols = np.minimum(is_ + b, n_s + 1)
                out = out + wp[..., a] * ws[..., b] * self._padded[rows, cols]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_index", "sample_index", "tilt_deg"])
        for i, row in enumerate(self.values):
            for j, val in enumerate(row):
                w.writerow([i, j, f"{val:.6f}"])
        return buf.getvalue()


def field_tilt(field: OrientationField, path_index, sample_index) -> np.ndarray:
    return field.tilt(path_index, sample_index)


Region = Iterable[tuple[int, tuple[int, int]]]


def deform_field(
    field: OrientationField,
    region: Region,
    target_tilt: float,
    blend_halfwidth: int | tuple[int, int] = 2,
) -> OrientationField:
    """Impose ``target_tilt`` on a set of ``(path, (first_sample, last_sample))`` nodes.

    Nodes within ``blend_halfwidth`` cells of the region are blended toward
    the target with a raised-cosine weight; all other nodes are untouched.
    ``blend_halfwidth`` may be a single int or a ``(path_cells, sample_cells)`` pair.
    """
    region = list(region)
    if not region:
        return field
    if not field.tilt_min <= target_tilt <= field.tilt_max:
        raise ValueError(f"target tilt {target_tilt} outside [{field.tilt_min}, {field.tilt_max}]")
    hp, hs = (blend_halfwidth, blend_halfwidth) if np.isscalar(blend_halfwidth) else blend_halfwidth
    n_p, n_s = field.shape
    ii, jj = np.meshgrid(np.arange(n_p), np.arange(n_s), indexing="ij")
    weight = np.zeros(field.shape)
    for path, (s0, s1) in region:
        if not (0 <= path < n_p and 0 <= s0 <= s1 < n_s):
            raise DomainError(f"region ({path}, {s0}-{s1}) outside the field grid")
        dp = np.abs(ii - path)
        ds = np.maximum(0, np.maximum(s0 - jj, jj - s1))
        weight = np.maximum(weight, _blend_weight(dp, hp) * _blend_weight(ds, hs))
    vals = field.values.copy()
    touched = weight > 0
    vals[touched] = vals[touched] + weight[touched] * (target_tilt - vals[touched])
    vals[weight == 1.0] = target_tilt
    return OrientationField(vals, field.base_tilt, field.yaw, field.tilt_min, field.tilt_max)
