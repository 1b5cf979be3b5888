"""ISO 6983 program output in inverse-time mode, and a reader for the same dialect."""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError
from .kinematics import AXES
from .simulator import KinematicProfile, Segment

_WORD = re.compile(r"([A-Z])([-+]?\d*\.?\d+)")
_PATH = re.compile(r"\(PATH (\d+)\)")


def _fmt(x: float, decimals: int) -> str:
    s = f"{x:.{decimals}f}"
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def _axes_words(q, decimals: int) -> str:
    return " ".join(f"{name}{_fmt(v, decimals)}" for name, v in zip(AXES, q))


def emit_gcode(profile: KinematicProfile, mode: str = "inverse_time", decimals: int = 4, retract: float | None = None) -> str:
    """NC program: rapid to each pass start, then one ``G01`` block per segment.

    In ``inverse_time`` mode each block carries ``F = 1 / dt`` (1/min);
    ``units_per_min`` writes the programmed feed once per pass under G94.
    ``retract`` adds a Z clearance move before each rapid.
    """
    if mode not in ("inverse_time", "units_per_min"):
        raise ValueError(f"unknown feed mode {mode!r}")
    lines = ["%", "(machsurf)", "G21 G90 G17", "G93" if mode == "inverse_time" else "G94"]
    n = 0

    def block(text):
        nonlocal n
        n += 1
        lines.append(f"N{n} {text}")

    frn = profile.frn
    prev_path = None
    for i in range(len(profile)):
        q = profile.joints[i]
        if profile.path[i] != prev_path:
            prev_path = profile.path[i]
            lines.append(f"(PATH {int(prev_path)})")
            if retract is not None:
                block(f"G00 Z{_fmt(retract, decimals)}")
                block(f"G00 X{_fmt(q[0], decimals)} Y{_fmt(q[1], decimals)} A{_fmt(q[3], decimals)} C{_fmt(q[4], decimals)}")
            block(f"G00 {_axes_words(q, decimals)}")
            first = True
            continue
        if mode == "inverse_time":
            block(f"G01 {_axes_words(q, decimals)} F{_fmt(frn[i], decimals)}")
        else:
            feed = f" F{_fmt(profile.F_prog, decimals)}" if first else ""
            block(f"G01 {_axes_words(q, decimals)}{feed}")
        first = False
    lines += ["G94", "M30", "%"]
    return "\n".join(lines) + "\n"


def read_nc(text: str) -> list[Segment]:
    """Joint values per pass from a program written by :func:`emit_gcode`.

    A pass starts at each ``(PATH i)`` comment; its first posture is the
    last rapid carrying all five axes.
    """
    segments = []
    current, joints = None, []
    last = {a: None for a in AXES}

    def flush():
        if current is not None and joints:
            segments.append(Segment(current, np.arange(len(joints)), np.array(joints)))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = _PATH.search(line)
        if m:
            flush()
            current, joints = int(m.group(1)), []
            continue
        code = re.sub(r"\(.*?\)", "", line)
        if not code or code == "%":
            continue
        words = dict(_WORD.findall(code))
        g = words.get("G")
        for a in AXES:
            if a in words:
                last[a] = float(words[a])
        if g is None or g not in ("00", "0", "01", "1"):
            continue
        if current is None:
            raise ConfigError(f"NC line {lineno}: motion before any (PATH i) marker")
        missing = any(v is None for v in last.values())
        if g in ("00", "0"):
            if not missing:
                joints = [[last[a] for a in AXES]]  # only the final rapid of the approach is a posture
            continue
        if missing:
            raise ConfigError(f"NC line {lineno}: axis value missing")
        joints.append([last[a] for a in AXES])
    flush()
    return segments
