"""Scene files: JSON descriptions of a field, a domain and the agents in it.

A scene is a JSON object with these keys (all but ``field`` optional)::

    name, description
    domain       {"kind": "plane" | "rect" | "disk" | "polygon", ...}
    field        expression tree; node kinds are the lens names
                 (constant, linear, proportional, fisheye, eaton, grin) and
                 product, patch, transform, clamp, pullback, raster
    floor, ceiling
    robots       [{"position": [x, y], "heading_deg": a, "delta": d}, ...]
    geodesics    [{"position": [x, y], "heading": radians}, ...]
    integrator   rtol, atol, method, max_step, first_step, event_tol,
                 stall_factor, stall_fraction, sample_dt
    termination  t_max, target [x, y], target_radius
    analysis     center, turning, convergence, conservation, exit_sides,
                 period_axis, closure_period
    output       csv (bool), raster {"path", "res", "mode", "extent", "origin"}

Loading collects every problem before failing, each prefixed with the
location of the offending element (``robots[2].position``).
"""

from dataclasses import dataclass, field as dc_field
import copy
import json
import math
import os

import numpy as np

from . import conformal, fields, raster, sim
from .domains import Plane, Rect, domain_from_dict
from .errors import ArtspaceError, ConfigError, PreconditionError, SceneValidationError

TOP_KEYS = {"name", "description", "domain", "field", "floor", "ceiling", "robots",
            "geodesics", "integrator", "termination", "analysis", "output"}
AGENT_KEYS = {"position", "heading", "heading_deg", "delta", "label"}
TERMINATION_KEYS = {"t_max", "target", "target_radius"}
ANALYSIS_KEYS = {"center", "turning", "convergence", "conservation", "exit_sides",
                 "period_axis", "closure_period"}
OUTPUT_KEYS = {"csv", "raster", "report"}
CONFORMAL_GRID = 9

DEMO_DIR = os.path.join(os.path.dirname(__file__), "demos")


@dataclass
class Agent:
    label: str
    pose: sim.RobotPose
    robot: bool


@dataclass
class SceneConfig:
    name: str
    description: str
    domain: object
    field: fields.ScalarField
    agents: list
    options: sim.SimOptions
    analysis: dict
    output: dict
    source: dict
    warnings: list = dc_field(default_factory=list)

    @property
    def robots(self):
        return [a for a in self.agents if a.robot]

    @property
    def geodesics(self):
        return [a for a in self.agents if not a.robot]

    def summary(self):
        return {"name": self.name, "fields": 1, "robots": len(self.robots),
                "geodesics": len(self.geodesics)}


# ------------------------------------------------------------------ loading

def _error_text(exc):
    return str(exc).strip() or type(exc).__name__


def _child_nodes(d, path):
    """(subpath, node) pairs of field sub-expressions, for error location."""
    kind = d.get("kind")
    out = []
    if kind == "product":
        for i, o in enumerate(d.get("operands", [])):
            out.append((f"{path}.operands[{i}]", o))
    elif kind == "patch":
        if "background" in d:
            out.append((f"{path}.background", d["background"]))
        for i, p in enumerate(d.get("patches", [])):
            if isinstance(p, dict) and "field" in p:
                out.append((f"{path}.patches[{i}].field", p["field"]))
    elif kind in ("transform", "clamp", "pullback"):
        if "field" in d:
            out.append((f"{path}.field", d["field"]))
    return out


def _locate_field_error(d, path, build):
    """Walk down to the deepest node that fails to build."""
    if isinstance(d, dict):
        for sub, node in _child_nodes(d, path):
            if isinstance(node, dict) and "expr" in node and "kind" not in node:
                node = node["expr"]
            try:
                build(node)
            except (ArtspaceError, KeyError, TypeError, ValueError):
                return _locate_field_error(node, sub, build)
    try:
        build(d)
    except ConfigError as exc:
        where = f"{path}.{exc.param}" if exc.param else path
        return f"{where}: {_error_text(exc)}"
    except KeyError as exc:
        return f"{path}: missing key {exc.args[0]!r}"
    except (ArtspaceError, TypeError, ValueError) as exc:
        return f"{path}: {_error_text(exc)}"
    return None


def _pullbacks(expr, path="field"):
    """(path, Pullback node) pairs inside a built expression tree."""
    if isinstance(expr, fields.ScalarField):
        expr = expr.expr
    found = []
    if isinstance(expr, conformal.Pullback):
        found.append((path, expr))
        found.extend(_pullbacks(expr.virtual, path + ".field"))
    elif isinstance(expr, fields.Product):
        for i, o in enumerate(expr.operands):
            found.extend(_pullbacks(o, f"{path}.operands[{i}]"))
    elif isinstance(expr, fields.Patch):
        found.extend(_pullbacks(expr.background, path + ".background"))
        for i, (_, e) in enumerate(expr.pieces):
            found.extend(_pullbacks(e, f"{path}.patches[{i}].field"))
    elif isinstance(expr, (fields.Transform, fields.Clamp)):
        found.extend(_pullbacks(expr.inner, path + ".field"))
    return found


def _sample_grid(domain, n=CONFORMAL_GRID):
    """Node coordinates of an ``n x n`` grid and a mask of usable nodes."""
    xmin, xmax, ymin, ymax = domain.bounds()
    if not all(map(math.isfinite, (xmin, xmax, ymin, ymax))):
        xmin, xmax, ymin, ymax = -1.0, 1.0, -1.0, 1.0
    # stay off the boundary where maps such as Schwarz-Christoffel degenerate
    fx = np.linspace(0.05, 0.95, n)
    xs, ys = xmin + fx * (xmax - xmin), ymin + fx * (ymax - ymin)
    tol = 0.02 * min(xmax - xmin, ymax - ymin)
    ok = np.zeros((n, n), bool)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            dist = float(domain.boundary_distance(x, y))
            ok[i, j] = bool(domain.contains(x, y)) and (not math.isfinite(dist) or dist > tol)
    return xs, ys, ok


def check_conformal(cmap, domain, n=CONFORMAL_GRID):
    """First sample point where the map fails to be conformal, else None.

    A node fails when ``|w'|`` is undefined, infinite, zero or negligible
    against the grid median; a cell fails when ``w'`` winds around zero
    along its edges, which places a critical point or pole inside it.
    """
    xs, ys, ok = _sample_grid(domain, n)
    d = np.full((n, n), np.nan, complex)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            if not ok[i, j]:
                continue
            try:
                d[i, j] = complex(np.asarray(cmap.derivatives(complex(x, y))[0]))
            except ArtspaceError:
                return (float(x), float(y))
    mag = np.abs(d[ok])
    if not np.all(np.isfinite(mag)):
        i, j = np.argwhere(ok & ~np.isfinite(np.abs(d)))[0]
        return (float(xs[j]), float(ys[i]))
    scale = float(np.median(mag)) if mag.size else 0.0
    for i, j in np.argwhere(ok):
        if not abs(d[i, j]) > 1e-8 * scale:
            return (float(xs[j]), float(ys[i]))
    for i in range(n - 1):
        for j in range(n - 1):
            if not ok[i:i + 2, j:j + 2].all():
                continue
            loop = [d[i, j], d[i, j + 1], d[i + 1, j + 1], d[i + 1, j], d[i, j]]
            turn = sum(np.angle(b / a) for a, b in zip(loop, loop[1:]))
            if abs(turn) > math.pi:
                return (float(0.5 * (xs[j] + xs[j + 1])), float(0.5 * (ys[i] + ys[i + 1])))
    return None


def _agent(d, path, robot, errors, domain):
    if not isinstance(d, dict):
        errors.append(f"{path}: expected an object")
        return None
    unknown = set(d) - AGENT_KEYS
    if unknown:
        errors.append(f"{path}: unknown key(s) {sorted(unknown)}")
    pos = d.get("position")
    try:
        x, y = (float(v) for v in pos)
    except (TypeError, ValueError):
        errors.append(f"{path}.position: expected [x, y], got {pos!r}")
        return None
    if "heading" in d and "heading_deg" in d:
        errors.append(f"{path}: give heading or heading_deg, not both")
    try:
        theta = (math.radians(float(d["heading_deg"])) if "heading_deg" in d
                 else float(d.get("heading", 0.0)))
    except (TypeError, ValueError):
        errors.append(f"{path}.heading: not a number")
        return None
    delta = 0.0
    if robot:
        try:
            delta = float(d.get("delta", 0.01))
        except (TypeError, ValueError):
            errors.append(f"{path}.delta: not a number")
            return None
        if not delta > 0:
            errors.append(f"{path}.delta: motor half-spacing must be positive, got {delta}")
    elif "delta" in d:
        errors.append(f"{path}.delta: geodesics have no width; list the agent under robots")
    if domain is not None and not bool(domain.contains(x, y)):
        errors.append(f"{path}.position: ({x}, {y}) lies outside the domain {domain!r}")
    return Agent(d.get("label", path), sim.RobotPose(x, y, theta, delta), robot)


def _options(d, errors):
    integ = dict(d.get("integrator") or {})
    term = dict(d.get("termination") or {})
    for k in set(term) - TERMINATION_KEYS:
        errors.append(f"termination.{k}: unknown key")
        term.pop(k)
    sample_dt = integ.pop("sample_dt", None)
    opts = dict(integ)
    opts.update(term)
    try:
        o = sim.SimOptions.from_dict(opts)
    except ConfigError as exc:
        sect = "termination" if exc.param in TERMINATION_KEYS else "integrator"
        errors.append(f"{sect}.{exc.param}: {_error_text(exc)}")
        return sim.SimOptions()
    except (TypeError, ValueError) as exc:
        errors.append(f"integrator: {_error_text(exc)}")
        return sim.SimOptions()
    if sample_dt is not None:
        try:
            dt = float(sample_dt)
            if not dt > 0:
                raise ValueError
        except (TypeError, ValueError):
            errors.append(f"integrator.sample_dt: must be a positive number, got {sample_dt!r}")
        else:
            n = int(math.floor(o.t_max / dt + 1e-9))
            o.sample_times = np.minimum(np.arange(n + 1) * dt, o.t_max)
    return o


def parse_scene(data):
    """Validate a scene dict; raise :class:`SceneValidationError` listing every error."""
    errors = []
    if not isinstance(data, dict):
        raise SceneValidationError(["scene: top level must be a JSON object"])
    for k in sorted(set(data) - TOP_KEYS):
        errors.append(f"{k}: unknown top-level key")

    domain = None
    try:
        domain = domain_from_dict(data.get("domain", {"kind": "plane"}))
    except ConfigError as exc:
        errors.append(f"domain.{exc.param or 'kind'}: {_error_text(exc)}")
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"domain: {_error_text(exc)}")

    fld = None
    if "field" not in data:
        errors.append("field: missing")
    else:
        def build(node):
            return fields.expr_from_dict(node)
        try:
            expr = build(data["field"])
        except (ArtspaceError, KeyError, TypeError, ValueError):
            errors.append(_locate_field_error(data["field"], "field", build)
                          or "field: invalid expression")
        else:
            try:
                fld = fields.ScalarField(expr, domain=domain or Plane(),
                                         floor=data.get("floor"), ceiling=data.get("ceiling"))
            except ConfigError as exc:
                errors.append(f"{exc.param or 'field'}: {_error_text(exc)}")
    if fld is not None and domain is not None:
        for path, node in _pullbacks(fld):
            bad = check_conformal(node.cmap, domain)
            if bad is not None:
                errors.append(f"{path}.map: map is not conformal at {bad} (|w'| must be "
                              f"finite and nonzero on the domain)")

    agents = []
    for key, robot in (("robots", True), ("geodesics", False)):
        items = data.get(key, [])
        if not isinstance(items, list):
            errors.append(f"{key}: expected a list")
            continue
        for i, item in enumerate(items):
            a = _agent(item, f"{key}[{i}]", robot, errors, domain)
            if a is not None:
                agents.append(a)

    opts = _options(data, errors)
    analysis = dict(data.get("analysis") or {})
    for k in sorted(set(analysis) - ANALYSIS_KEYS):
        errors.append(f"analysis.{k}: unknown key")
    output = dict(data.get("output") or {})
    for k in sorted(set(output) - OUTPUT_KEYS):
        errors.append(f"output.{k}: unknown key")
    if "raster" in output:
        spec = output["raster"]
        if not isinstance(spec, dict):
            errors.append("output.raster: expected an object")
        elif spec.get("mode", "linear") not in raster.MODES:
            errors.append(f"output.raster.mode: must be one of {raster.MODES}")
    if errors:
        raise SceneValidationError(errors)
    return SceneConfig(
        name=data.get("name", "scene"), description=data.get("description", ""),
        domain=domain, field=fld, agents=agents, options=opts, analysis=analysis,
        output=output, source=copy.deepcopy(data))


def load_scene(path):
    """Read and validate a scene file."""
    path = os.fspath(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SceneValidationError([f"{path}: invalid JSON at line {exc.lineno} "
                                    f"column {exc.colno}: {exc.msg}"]) from None
    return parse_scene(data)


def demo_names():
    return sorted(f[:-5] for f in os.listdir(DEMO_DIR) if f.endswith(".json"))


def demo_path(name):
    path = os.path.join(DEMO_DIR, f"{name}.json")
    if not os.path.exists(path):
        raise ConfigError(f"no demo named {name!r}; available: {', '.join(demo_names())}", "name")
    return path


def load_demo(name):
    return load_scene(demo_path(name))


# ------------------------------------------------------------------ running

@dataclass
class SceneResult:
    config: SceneConfig
    trajectories: list
    report: dict
    raster: object = None


def exit_side(domain, point):
    """Boundary side nearest ``point``: left/right/bottom/top for rectangles."""
    if isinstance(domain, Rect):
        x, y = point
        d = {"left": abs(x - domain.xmin), "right": abs(x - domain.xmax),
             "bottom": abs(y - domain.ymin), "top": abs(y - domain.ymax)}
        return min(d, key=d.get)
    cx = 0.5 * (domain.bounds()[0] + domain.bounds()[1])
    cy = 0.5 * (domain.bounds()[2] + domain.bounds()[3])
    return f"{math.degrees(math.atan2(point[1] - cy, point[0] - cx)):.1f}deg"


def _center(cfg):
    c = cfg.analysis.get("center")
    if c is not None:
        return tuple(float(v) for v in c)
    rc = cfg.field.radial_center()
    if isinstance(rc, tuple):
        return rc
    return None


def _upward_crossings(traj, axis):
    y = traj.y - axis
    idx = np.where((y[:-1] < 0) & (y[1:] >= 0))[0]
    return np.array([traj.x[i] + (traj.x[i + 1] - traj.x[i]) * (-y[i]) / (y[i + 1] - y[i])
                     for i in idx])


def analyze_trajectory(traj, field=None, center=None, analysis=None, domain=None):
    analysis = analysis or {}
    out = {"kind": traj.kind, "termination": traj.reason, "samples": len(traj),
           "t_end": float(traj.t[-1]), "final_position": [float(v) for v in traj.position[-1]]}
    if analysis.get("turning", True) and traj.dim == 2:
        try:
            out["turning_deg"] = math.degrees(sim.turning_angle(traj, field))
        except PreconditionError:
            out["turning_deg"] = None
    if center is not None and traj.dim == 2:
        d0 = traj.position[0] - np.asarray(center)
        out["r0"] = float(np.hypot(*d0))
        if analysis.get("conservation", True):
            diag = sim.trajectory_diagnostics(traj, center)
            out["L0"] = float(diag.L[0])
            out["L_drift"] = float(diag.L_drift)
            out["E_error"] = float(diag.E_error)
            out["alpha0_deg"] = math.degrees(float(diag.alpha[0]))
        if analysis.get("convergence", True):
            diag = sim.trajectory_diagnostics(traj, center)
            try:
                out["fitted_rate"] = sim.fit_convergence(traj, center)
                out["predicted_rate"] = -math.cos(float(diag.alpha[0]))
            except PreconditionError:
                out["fitted_rate"] = None
    if analysis.get("exit_sides", True) and traj.reason == "exit" and domain is not None:
        out["exit_side"] = exit_side(domain, traj.position[-1][:2])
    if "period_axis" in analysis and traj.dim == 2:
        xs = _upward_crossings(traj, float(analysis["period_axis"]))
        out["axial_periods"] = [float(v) for v in np.diff(xs)]
    if "closure_period" in analysis and traj.dim == 2:
        T = float(analysis["closure_period"])
        k = int(np.argmin(np.abs(traj.t - T)))
        if abs(traj.t[k] - T) <= 1e-9 * max(1.0, T):
            out["closure_error"] = float(np.linalg.norm(traj.position[k] - traj.position[0]))
        fit = fit_circle(traj.position[:, :2])
        out["circle_center"] = [float(fit[0]), float(fit[1])]
        out["circle_radius"] = float(fit[2])
        out["circle_residual"] = float(fit[3])
    return out


def fit_circle(points):
    """Algebraic least-squares circle: (cx, cy, radius, max |dist - radius|)."""
    p = np.asarray(points, float)
    A = np.column_stack([2 * p[:, 0], 2 * p[:, 1], np.ones(len(p))])
    b = (p ** 2).sum(axis=1)
    (cx, cy, c), *_ = np.linalg.lstsq(A, b, rcond=None)
    r = math.sqrt(c + cx * cx + cy * cy)
    resid = np.abs(np.hypot(p[:, 0] - cx, p[:, 1] - cy) - r)
    return cx, cy, r, float(resid.max())


def _annotated(exc, where):
    exc.args = (f"{where}: {exc.args[0] if exc.args else ''}",) + tuple(exc.args[1:])
    exc.scene_element = where
    return exc


def _run_agent(cfg, agent):
    try:
        if agent.robot:
            return sim.simulate_robot(cfg.field, agent.pose, cfg.options)
        return sim.simulate_geodesic2d(cfg.field, agent.pose, cfg.options)
    except ArtspaceError as exc:
        raise _annotated(exc, agent.label) from None


def run_scene(cfg, out_dir=None, workers=None):
    """Integrate every agent, then write CSVs, raster and report from one writer."""
    if workers in (None, 0, 1):
        trajs = [_run_agent(cfg, a) for a in cfg.agents]
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(lambda a: _run_agent(cfg, a), cfg.agents))
    center = _center(cfg)
    radial = isinstance(cfg.field.radial_center(), tuple)
    # conserved L and the exponential rate only mean something for radial fields
    analysis = {"conservation": radial, "convergence": radial or center is not None}
    analysis.update(cfg.analysis)
    entries = []
    for a, tr in zip(cfg.agents, trajs):
        e = {"label": a.label, "robot": a.robot,
             "pose": [a.pose.x, a.pose.y, a.pose.theta], "delta": a.pose.delta}
        e.update(analyze_trajectory(tr, None, center, analysis, cfg.domain))
        entries.append(e)
    report = {"scene": cfg.name, "center": None if center is None else list(center),
              "trajectories": entries}

    img = None
    spec = cfg.output.get("raster")
    if spec:
        img = raster.rasterize(cfg.field, spec.get("res", (256, 256)), extent=spec.get("extent"),
                               origin=spec.get("origin"), mode=spec.get("mode", "linear"))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if cfg.output.get("csv", True):
            for i, (a, tr) in enumerate(zip(cfg.agents, trajs)):
                name = f"{'robot' if a.robot else 'geodesic'}_{i:03d}.csv"
                tr.to_csv(os.path.join(out_dir, name))
                entries[i]["csv"] = name
        if img is not None:
            path = os.path.join(out_dir, spec.get("path", "field.pgm"))
            raster.write_image(img, path)
            report["raster"] = os.path.basename(path)
        with open(os.path.join(out_dir, cfg.output.get("report", "report.json")), "w") as fh:
            json.dump(report, fh, indent=2, default=_json_default)
            fh.write("\n")
    return SceneResult(cfg, trajs, report, img)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


__all__ = [
    "Agent", "SceneConfig", "SceneResult", "analyze_trajectory", "check_conformal",
    "demo_names", "demo_path", "exit_side", "fit_circle", "load_demo", "load_scene",
    "parse_scene", "run_scene",
]
