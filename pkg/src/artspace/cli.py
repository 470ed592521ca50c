"""Command-line front end.

Exit status is 0 on success, 1 for invalid input (scene, polygon, image or
trajectory files) and 2 for numerical failures.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import raster, scene, sim
from .errors import (
    ArtspaceError, ConvergenceError, InversionError, NumericalError, ParseError,
    PolygonError, PreconditionError, SceneValidationError,
)
from .schwarz_christoffel import Polygon, cache_path, cached_solve

NUMERICAL = (NumericalError, ConvergenceError, InversionError)


def _point(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}") from None
    return (x, y)


def _res(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return (w, h)


def _dump(obj, out):
    json.dump(obj, out, indent=2, default=scene._json_default)
    out.write("\n")


def cmd_synth(args, out):
    cfg = scene.load_scene(args.scene)
    spec = dict(cfg.output.get("raster") or {})
    mode = args.mode or spec.get("mode", "linear")
    res = args.res or tuple(spec.get("res", (256, 256)))
    img = raster.rasterize(cfg.field, res, extent=spec.get("extent"), origin=spec.get("origin"),
                           mode=mode, allow_degenerate=args.allow_degenerate)
    raster.write_image(img, args.out)
    _dump({"image": args.out, "metadata": raster.sidecar_path(args.out),
           "width": img.width, "height": img.height, **img.metadata()}, out)


def cmd_simulate(args, out):
    cfg = scene.load_scene(args.scene)
    result = scene.run_scene(cfg, out_dir=args.out_dir, workers=args.workers)
    _dump(result.report, out)


def cmd_analyze(args, out):
    traj = sim.Trajectory.from_csv(args.traj)
    center = args.center
    report = {"samples": len(traj), "termination": traj.reason, "kind": traj.kind}
    if traj.dim == 2:
        try:
            report["turning_deg"] = math.degrees(sim.turning_angle(traj))
        except PreconditionError as exc:
            report["turning_deg"] = None
            report["turning_note"] = str(exc)
    if center is not None and traj.dim == 2:
        diag = sim.trajectory_diagnostics(traj, center)
        report.update(L0=float(diag.L[0]), L_drift=diag.L_drift,
                      alpha0_deg=math.degrees(float(diag.alpha[0])),
                      r0=float(diag.r[0]), r_end=float(diag.r[-1]))
        try:
            report["fitted_rate"] = sim.fit_convergence(traj, center)
            report["predicted_rate"] = -math.cos(float(diag.alpha[0]))
        except PreconditionError as exc:
            report["fitted_rate"] = None
            report["fit_note"] = str(exc)
    _dump(report, out)


def _read_polygon(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}", exc.pos) from None
    verts = data.get("vertices") if isinstance(data, dict) else data
    if verts is None:
        raise PolygonError(f"{path}: expected a vertex list or an object with 'vertices'")
    center = data.get("center") if isinstance(data, dict) else None
    return Polygon(verts), None if center is None else complex(*center)


def cmd_maps(args, out):
    poly, center = _read_polygon(args.polygon)
    os.makedirs(args.cache, exist_ok=True)
    path = cache_path(poly, args.cache, center=center)
    hit = os.path.exists(path)
    m = cached_solve(poly, args.cache, center=center)
    verts = m.center + m.prefactor * m._vertex_integrals
    err = float(np.max(np.abs(verts - poly.vertices)))
    _dump({"cache": path, "cached": hit,
           "prevertex_angles_deg": [math.degrees(math.atan2(z.imag, z.real))
                                    for z in m.prevertices],
           "center": [m.center.real, m.center.imag],
           "max_vertex_error": err}, out)


def cmd_demo(args, out):
    if args.list or not args.name:
        _dump({"demos": scene.demo_names()}, out)
        return
    cfg = scene.load_demo(args.name)
    result = scene.run_scene(cfg, out_dir=args.out_dir, workers=args.workers)
    _dump(result.report, out)


def build_parser():
    p = argparse.ArgumentParser(prog="artspace", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="rasterize a scene's field to a graymap")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=raster.MODES)
    s.add_argument("--res", type=_res, help="grid size WxH")
    s.add_argument("--allow-degenerate", action="store_true",
                   help="emit mid-gray instead of failing on a constant field")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("simulate", help="integrate every agent of a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", help="diagnostics for a trajectory CSV")
    s.add_argument("--traj", required=True)
    s.add_argument("--center", type=_point, default=None, help="X,Y")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("maps", help="solve and cache Schwarz-Christoffel parameters")
    s.add_argument("--polygon", required=True, help="JSON vertex list")
    s.add_argument("--cache", required=True, help="cache directory")
    s.set_defaults(func=cmd_maps)

    s = sub.add_parser("demo", help="run a bundled scene")
    s.add_argument("--name")
    s.add_argument("--list", action="store_true")
    s.add_argument("--out-dir", default=None)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_demo)
    return p


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        args.func(args, out)
    except SceneValidationError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=err)
        return 1
    except NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=err)
        return 2
    except (ArtspaceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
