"""CL text files: ``$$`` header comments, one ``GOTO/ x,y,z, i,j,k`` record per posture."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .machining import CutterGeometry
from .planner import ToolPath

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_GOTO = re.compile(r"^GOTO/\s*" + r"\s*,\s*".join([f"({_NUM})"] * 6) + r"\s*$")
_PATH = re.compile(r"^\$\$\s*PATH\s+(\d+)\b")
_TOOL = re.compile(r"^\$\$\s*TOOL\s+R=(" + _NUM + r")\s+r=(" + _NUM + r")")


@dataclass
class CLPath:
    path: int
    points: np.ndarray  # C_L, mm
    axes: np.ndarray  # unit tool axis


def _fmt(x: float, decimals: int) -> str:
    s = f"{x:.{decimals}f}"
    # avoid "-0.000000" so identical geometry gives identical text
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def write_cl(toolpath: ToolPath, decimals: int = 6, order=None) -> str:
    """CL text for every non-empty pass in machining order (path coordinate)."""
    st = toolpath.strategy
    lines = [
        "$$ CL machsurf",
        f"$$ TOOL R={_fmt(toolpath.tool.R, decimals)} r={_fmt(toolpath.tool.r, decimals)}",
        "$$ STRATEGY " + " ".join(f"{k}={v}" for k, v in asdict(st).items()),
    ]
    paths = order if order is not None else sorted(toolpath.nonempty(), key=lambda p: p.coord)
    for p in paths:
        lines.append(f"$$ PATH {p.index} coord={p.coord:.4f} direction={p.direction}{' partial' if p.partial else ''}")
        for c, u in zip(p.cl, p.axis):
            vals = [_fmt(x, decimals) for x in (*c, *u)]
            lines.append(f"GOTO/ {vals[0]},{vals[1]},{vals[2]}, {vals[3]},{vals[4]},{vals[5]}")
    lines.append("$$ END")
    return "\n".join(lines) + "\n"


def read_cl(text: str) -> tuple[list[CLPath], CutterGeometry | None]:
    """Parse CL text; records before any ``$$ PATH`` marker form path 0."""
    paths: list[CLPath] = []
    tool = None
    current, pts, axes = None, [], []

    def flush():
        if current is not None and pts:
            paths.append(CLPath(current, np.array(pts), np.array(axes)))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$$"):
            m = _PATH.match(line)
            if m:
                flush()
                current, pts, axes = int(m.group(1)), [], []
            m = _TOOL.match(line)
            if m:
                tool = CutterGeometry(float(m.group(1)), float(m.group(2)))
            continue
        m = _GOTO.match(line)
        if not m:
            raise ConfigError(f"CL line {lineno}: unrecognised record {line!r}")
        if current is None:
            current = 0
        vals = [float(g) for g in m.groups()]
        pts.append(vals[:3])
        axes.append(vals[3:])
    flush()
    return paths, tool
