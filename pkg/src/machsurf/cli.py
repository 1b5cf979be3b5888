"""Command line: ``plan``, ``post`` and ``simulate`` sub-commands."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from .config import load_config
from .errors import MachSurfError
from .pipeline import report_dict, post, run, simulate_file

log = logging.getLogger("machsurf")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="job configuration (overrides the positional one)")
    common.add_argument("--out-dir", type=Path, help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads for per-plane work")
    common.add_argument("--verbose", "-v", action="store_true")
    common.add_argument("--strict", action="store_true", help="exit 5 on residual constraint violations")

    ap = argparse.ArgumentParser(prog="machsurf", description="5-axis finishing tool paths with kinematic tilt optimisation")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plan", parents=[common], help="full pipeline: paths, IKT, simulation, optimisation, NC")
    p.add_argument("job", nargs="?", type=Path)
    p.add_argument("--no-optimize", action="store_true", help="skip the tilt optimisation")
    p = sub.add_parser("post", parents=[common], help="CL file to NC program (IKT only)")
    p.add_argument("clfile", type=Path)
    p.add_argument("job", nargs="?", type=Path)
    p = sub.add_parser("simulate", parents=[common], help="velocity profile of a CL or NC file")
    p.add_argument("program", type=Path)
    p.add_argument("job", nargs="?", type=Path)
    return ap


def _main(args) -> int:
    cfg_path = args.config or args.job
    if cfg_path is None:
        log.error("no job configuration given")
        return 2
    job = load_config(cfg_path)
    out_dir = args.out_dir if args.out_dir is not None else Path(job.output.dir)
    if args.command == "plan":
        result = run(job, out_dir, workers=max(1, args.workers), optimize=False if args.no_optimize else None)
        s = result.summary
        print(
            f"C saturated blocks: {s['saturation_before']['axes']['C']['saturated_blocks']} before, "
            f"{s['saturation_after']['axes']['C']['saturated_blocks']} after optimisation, "
            f"{s['saturation_final']['axes']['C']['saturated_blocks']} in the final program; "
            f"max scallop {s['max_scallop_mm']} mm"
        )
        for name, path in result.files.items():
            print(f"{name}: {path}")
        if result.violations:
            for v in result.violations:
                log.warning("residual: %s", v)
            if args.strict:
                return 5
        return 0
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = job.output.stem
    if args.command == "post":
        nc, _ = post(args.clfile.read_text(), job)
        path = out_dir / f"{stem}.nc"
        path.write_text(nc)
        print(f"nc: {path}")
        return 0
    profile, report = simulate_file(args.program.read_text(), job)
    (out_dir / f"{stem}_report.csv").write_text(profile.to_csv())
    print(yaml.safe_dump({"postures": len(profile), **report_dict(report)}, sort_keys=False), end="")
    if args.strict and any(a.count for a in report.axes.values()):
        return 5
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _main(args)
    except MachSurfError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
