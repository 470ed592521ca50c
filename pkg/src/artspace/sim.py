"""Trajectory integration and diagnostics.

Three models share one adaptive Runge-Kutta driver:

* ``simulate_robot``: finite-width differential drive, motors at
  ``position +/- delta * (rotated heading)``;
* ``simulate_geodesic2d``: the delta -> 0 limit, dx/dt = I chi,
  dtheta/dt = chi^T eps grad I;
* ``simulate_geodesic3d``: dchi/dt = -grad I + chi (grad I . chi).

Headings are counterclockwise from +x.  The left motor sits at +90 degrees
from the heading and dtheta/dt = (I_R - I_L) / (2 delta), so robots turn
toward lower intensity.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
import csv
import io
import math

import numpy as np
from scipy.integrate import DOP853, RK23, RK45

from .errors import (ConfigError, InversionError, NumericalError, OutOfDomainError,
                     ParseError, PreconditionError, SeamError, SingularPointError)

METHODS = {"DOP853": DOP853, "RK45": RK45, "RK23": RK23}
TERMINATIONS = ("target", "exit", "time-limit", "stalled")
_LEAVES_DOMAIN = (OutOfDomainError, SingularPointError, InversionError)


@dataclass(frozen=True)
class RobotPose:
    x: float
    y: float
    theta: float = 0.0
    delta: float = 0.0

    @property
    def chi(self):
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def position(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Pose3:
    position: tuple
    chi: tuple

    def __post_init__(self):
        c = np.asarray(self.chi, float)
        n = float(np.linalg.norm(c))
        if not n > 0:
            raise ConfigError("heading vector must be nonzero", "chi")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "chi", tuple(c / n))


@dataclass
class SimOptions:
    """Integrator and termination settings; defaults follow the library contract."""

    rtol: float = 1e-9
    atol: float = 1e-12
    method: str = "DOP853"
    t_max: float = 10.0
    max_step: float = None
    first_step: float = None
    target: tuple = None
    target_radius: float = 1e-3
    event_tol: float = 1e-10
    stall_factor: float = 10.0
    stall_fraction: float = 0.01
    sample_times: object = None

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}",
                              "method")
        for name in ("rtol", "atol", "t_max", "target_radius", "event_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}", name)
        if self.max_step is not None and not self.max_step > 0:
            raise ConfigError(f"max_step must be positive, got {self.max_step}", "max_step")
        if self.first_step is not None and not self.first_step > 0:
            raise ConfigError("first_step must be positive", "first_step")
        return self

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown integrator option(s) {sorted(unknown)}", sorted(unknown)[0])
        d = dict(d)
        if d.get("target") is not None:
            d["target"] = tuple(d["target"])
        return cls(**d).validate()


@dataclass
class Trajectory:
    """Time-stamped samples.  ``heading`` is theta (2D) or chi rows (3D)."""

    t: np.ndarray
    position: np.ndarray
    heading: np.ndarray
    intensity: np.ndarray
    s: np.ndarray
    reason: str
    kind: str = "geodesic2d"
    meta: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def x(self):
        return self.position[:, 0]

    @property
    def y(self):
        return self.position[:, 1]

    @property
    def dim(self):
        return self.position.shape[1]

    @property
    def theta(self):
        if self.dim != 2:
            raise AttributeError("3D trajectories carry chi, not theta")
        return self.heading

    @property
    def chi(self):
        if self.dim == 3:
            return self.heading
        return np.column_stack([np.cos(self.heading), np.sin(self.heading)])

    def columns(self):
        if self.dim == 2:
            names = ["t", "x", "y", "theta", "intensity", "s"]
            cols = [self.t, self.x, self.y, self.heading, self.intensity, self.s]
        else:
            names = ["t", "x", "y", "z", "chi_x", "chi_y", "chi_z", "intensity", "s"]
            cols = [self.t, *self.position.T, *self.heading.T, self.intensity, self.s]
        return names, np.column_stack(cols)

    def to_csv(self, path=None):
        names, data = self.columns()
        buf = io.StringIO()
        buf.write(",".join(names) + "\n")
        for row in data:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        buf.write(f"# termination: {self.reason}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
        reason = "time-limit"
        body = []
        for line in lines:
            if line.startswith("#"):
                if "termination:" in line:
                    reason = line.split("termination:", 1)[1].strip()
                continue
            if line.strip():
                body.append(line)
        if not body:
            raise ParseError(f"{path}: no header row", 0)
        reader = csv.reader(body)
        header = next(reader)
        need = {"t", "x", "y", "intensity", "s"}
        if not need <= set(header):
            raise ParseError(f"{path}: header lacks columns {sorted(need - set(header))}", 0)
        try:
            data = np.array([[float(v) for v in row] for row in reader], dtype=float)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", None) from None
        if data.ndim != 2 or data.shape[1] != len(header):
            raise ParseError(f"{path}: rows do not match the {len(header)}-column header", None)
        col = {name: data[:, i] for i, name in enumerate(header)}
        if "z" in col:
            pos = np.column_stack([col["x"], col["y"], col["z"]])
            heading = np.column_stack([col["chi_x"], col["chi_y"], col["chi_z"]])
            kind = "geodesic3d"
        else:
            pos = np.column_stack([col["x"], col["y"]])
            heading = col["theta"]
            kind = "geodesic2d"
        return cls(col["t"], pos, heading, col["intensity"], col["s"], reason, kind)


# ------------------------------------------------------------------- driver

def _auto_max_step(opts, scale):
    if opts.max_step is not None:
        return opts.max_step
    # keep steps from jumping over features in otherwise constant regions
    return scale / 50.0 if np.isfinite(scale) else math.inf


def _integrate(rhs, y0, opts, *, position, inside, intensity, floor, normalize=None,
               scale=math.inf):
    opts.validate()
    y0 = np.asarray(y0, float)
    if not inside(y0):
        raise ConfigError(f"initial state {y0[:3]} lies outside the domain", "pose")
    target = None if opts.target is None else np.asarray(opts.target, float)
    events = []
    if target is not None:
        events.append(("target", lambda y: np.linalg.norm(position(y) - target) <= opts.target_radius))
    events.append(("exit", lambda y: not inside(y)))

    samples_t = [0.0]
    samples_y = [y0]
    if target is not None and events[0][1](y0):
        return _finish(samples_t, samples_y, "target", intensity)
    sample_times = None if opts.sample_times is None else np.sort(np.asarray(opts.sample_times, float))
    next_sample = 0
    post = normalize or (lambda y: y)
    if sample_times is not None:
        while next_sample < len(sample_times) and sample_times[next_sample] <= 0.0:
            next_sample += 1

    kwargs = {"rtol": opts.rtol, "atol": opts.atol, "max_step": _auto_max_step(opts, scale)}
    if opts.first_step is not None:
        kwargs["first_step"] = opts.first_step
    try:
        solver = METHODS[opts.method](rhs, 0.0, y0, opts.t_max, **kwargs)
    except _LEAVES_DOMAIN:
        kwargs["first_step"] = 1e-6 * opts.t_max
        solver = METHODS[opts.method](rhs, 0.0, y0, opts.t_max, **kwargs)

    stall_since = None
    stall_limit = opts.stall_fraction * opts.t_max
    reason = None
    while reason is None:
        try:
            solver.step()
        except _LEAVES_DOMAIN:
            # a stage point left the domain: retry with a shorter step
            solver.h_abs *= 0.5
            if solver.h_abs < opts.event_tol:
                reason = "exit"
            continue
        if solver.status == "failed":
            raise NumericalError(f"integrator failed at t={solver.t:.6g}: step size underflow")
        t_old, t_new = solver.t_old, solver.t
        y_new = solver.y
        dense = None
        hit = None
        for name, pred in events:
            if pred(y_new):
                dense = dense or solver.dense_output()
                lo, hi = t_old, t_new
                while hi - lo > opts.event_tol:
                    mid = 0.5 * (lo + hi)
                    if pred(dense(mid)):
                        hi = mid
                    else:
                        lo = mid
                t_hit = hi if name == "target" else lo
                if hit is None or t_hit < hit[1]:
                    hit = (name, t_hit)
        t_stop = t_new if hit is None else hit[1]
        if sample_times is not None:
            while next_sample < len(sample_times) and sample_times[next_sample] <= t_stop:
                dense = dense or solver.dense_output()
                ts = float(sample_times[next_sample])
                samples_t.append(ts)
                samples_y.append(post(np.array(dense(ts))))
                next_sample += 1
        if hit is not None:
            dense = dense or solver.dense_output()
            if samples_t[-1] < hit[1]:
                samples_t.append(hit[1])
                samples_y.append(post(np.array(dense(hit[1]))))
            reason = hit[0]
            break
        if sample_times is None:
            samples_t.append(t_new)
            samples_y.append(np.array(y_new))
        if normalize is not None:
            solver.y = normalize(solver.y)
            solver.f = solver.fun(solver.t, solver.y)
        if intensity(solver.y) < opts.stall_factor * floor:
            if stall_since is None:
                stall_since = t_new
            elif t_new - stall_since > stall_limit:
                reason = "stalled"
        else:
            stall_since = None
        if reason is None and solver.status == "finished":
            reason = "time-limit"
    if reason == "exit" and samples_t[-1] < solver.t:
        samples_t.append(solver.t)
        samples_y.append(np.array(solver.y))
    return _finish(samples_t, samples_y, reason, intensity)


def _finish(ts, ys, reason, intensity):
    ys = np.array(ys)
    inten = np.array([intensity(y) for y in ys])
    return np.array(ts), ys, inten, reason


def _value_and_grad(field, x, y, hx, hy):
    """Field value and gradient; on a seam sample one-sided along the heading."""
    try:
        v, (gx, gy) = field.value_and_grad(x, y)
    except SeamError:
        eps = 1e-8 * max(1.0, abs(x), abs(y))
        v, (gx, gy) = field.value_and_grad(x + eps * hx, y + eps * hy)
    return float(v), float(gx), float(gy)


def geodesic2d_rhs(field):
    def rhs(t, u):
        c, s = math.cos(u[2]), math.sin(u[2])
        v, gx, gy = _value_and_grad(field, u[0], u[1], c, s)
        # chi^T eps grad I with eps the counterclockwise quarter turn
        return np.array([v * c, v * s, s * gx - c * gy, v])
    return rhs


def motor_positions(x, y, theta, delta):
    """(left, right) motor centers; left is at +90 degrees from the heading."""
    c, s = math.cos(theta), math.sin(theta)
    return (x - delta * s, y + delta * c), (x + delta * s, y - delta * c)


def robot_rhs(field, delta):
    def rhs(t, u):
        (lx, ly), (rx, ry) = motor_positions(u[0], u[1], u[2], delta)
        il = float(field.value(lx, ly))
        ir = float(field.value(rx, ry))
        v = 0.5 * (il + ir)
        return np.array([v * math.cos(u[2]), v * math.sin(u[2]), (ir - il) / (2.0 * delta), v])
    return rhs


def geodesic3d_rhs(field3):
    def rhs(t, u):
        v, g = field3.value_and_grad(u[0], u[1], u[2])
        g = np.asarray(g, float)
        chi = u[3:6]
        dchi = -g + chi * float(g @ chi)
        return np.concatenate([v * chi, dchi, [v]])
    return rhs


def _field_floor(field):
    return getattr(field, "floor", 0.0)


def simulate_geodesic2d(field, pose, opts=None):
    opts = opts or SimOptions()
    dom = field.domain

    def intensity(u):
        return float(field.value(u[0], u[1]))

    t, ys, inten, reason = _integrate(
        geodesic2d_rhs(field), [pose.x, pose.y, pose.theta, 0.0], opts,
        position=lambda u: u[:2], inside=lambda u: bool(dom.contains(u[0], u[1])),
        intensity=intensity, floor=_field_floor(field), scale=dom.scale)
    return Trajectory(t, ys[:, :2], ys[:, 2], inten, ys[:, 3], reason, "geodesic2d")


def simulate_robot(field, pose, opts=None):
    opts = opts or SimOptions()
    delta = float(pose.delta)
    if not delta > 0:
        raise ConfigError(f"finite-width simulation needs delta > 0, got {delta}", "delta")
    dom = field.domain

    def inside(u):
        (lx, ly), (rx, ry) = motor_positions(u[0], u[1], u[2], delta)
        return bool(dom.contains(u[0], u[1]) and dom.contains(lx, ly) and dom.contains(rx, ry))

    def intensity(u):
        (lx, ly), (rx, ry) = motor_positions(u[0], u[1], u[2], delta)
        return 0.5 * (float(field.value(lx, ly)) + float(field.value(rx, ry)))

    t, ys, inten, reason = _integrate(
        robot_rhs(field, delta), [pose.x, pose.y, pose.theta, 0.0], opts,
        position=lambda u: u[:2], inside=inside, intensity=intensity,
        floor=_field_floor(field), scale=dom.scale)
    return Trajectory(t, ys[:, :2], ys[:, 2], inten, ys[:, 3], reason, "robot",
                      meta={"delta": delta})


def simulate_geodesic3d(field3, pose, opts=None):
    opts = opts or SimOptions()

    def normalize(u):
        u = np.array(u)
        u[3:6] /= np.linalg.norm(u[3:6])
        return u

    t, ys, inten, reason = _integrate(
        geodesic3d_rhs(field3), [*pose.position, *pose.chi, 0.0], opts,
        position=lambda u: u[:3], inside=lambda u: field3.contains(u[0], u[1], u[2]),
        intensity=lambda u: float(field3.value_and_grad(u[0], u[1], u[2])[0]),
        floor=_field_floor(field3), normalize=normalize)
    return Trajectory(t, ys[:, :3], ys[:, 3:6], inten, ys[:, 6], reason, "geodesic3d")


def simulate_many(simulate, field, poses, opts=None, workers=None):
    """Run independent trajectories, optionally on a thread pool; order is preserved."""
    if workers in (None, 0, 1):
        return [simulate(field, p, opts) for p in poses]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: simulate(field, p, opts), poses))


# -------------------------------------------------------------- diagnostics

@dataclass
class RadialDiagnostics:
    E: np.ndarray
    L: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    alpha: np.ndarray

    @property
    def L_drift(self):
        """Max deviation of L from its initial value, relative when |L0| > 1e-3."""
        L0 = self.L[0]
        dev = float(np.max(np.abs(self.L - L0)))
        return dev / abs(L0) if abs(L0) > 1e-3 else dev

    @property
    def E_error(self):
        return float(np.max(np.abs(self.E + 1.0)))


def misalignment(position, chi, center=(0.0, 0.0)):
    """Signed angle from the inward radial direction to the heading."""
    d = np.atleast_2d(position) - np.asarray(center, float)
    chi = np.atleast_2d(chi)
    inward = -d
    cross = inward[:, 0] * chi[:, 1] - inward[:, 1] * chi[:, 0]
    dot = inward[:, 0] * chi[:, 0] + inward[:, 1] * chi[:, 1]
    return np.arctan2(cross, dot)


def _resolve_center(field, center):
    if center is not None:
        return tuple(float(c) for c in center)
    c = field.radial_center() if hasattr(field, "radial_center") else None
    if c is None:
        raise PreconditionError("field is not radially symmetric; pass a center explicitly")
    return (0.0, 0.0) if c == "any" else tuple(c)


def check_radial(field, center, radii, tol=1e-9):
    """Raise PreconditionError unless ``field`` is constant on circles about center."""
    cx, cy = center
    ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    for r in radii:
        xs = cx + r * np.cos(ang)
        ys = cy + r * np.sin(ang)
        ok = np.asarray(field.domain.contains(xs, ys))
        if ok.sum() < 2:
            continue
        v = np.asarray(field.value(xs[ok], ys[ok]))
        if np.ptp(v) > tol * max(1.0, float(np.max(np.abs(v)))):
            raise PreconditionError(f"field varies on the circle r={r:.4g} about {center}")


def radial_diagnostics(field, traj, center=None):
    """E, L, r, phi and misalignment per sample using dlambda = I^2 dt."""
    if traj.dim != 2:
        raise PreconditionError("radial diagnostics are planar")
    center = _resolve_center(field, center)
    d = traj.position - np.asarray(center)
    r = np.hypot(d[:, 0], d[:, 1])
    check_radial(field, center, np.linspace(max(r.min(), 1e-6), r.max(), 5))
    I_field = np.asarray(field.value(traj.x, traj.y), float)
    chi = traj.chi
    phi = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    # E = -I^2 dt/dlambda with dt/dlambda = 1/I^2 along the path
    E = -(I_field ** 2) / traj.intensity ** 2
    L = (d[:, 0] * chi[:, 1] - d[:, 1] * chi[:, 0]) / I_field
    alpha = misalignment(traj.position, chi, center)
    return RadialDiagnostics(E, L, r, phi, alpha)


def trajectory_diagnostics(traj, center=(0.0, 0.0)):
    """Field-free diagnostics using the recorded intensity column."""
    d = traj.position[:, :2] - np.asarray(center, float)
    r = np.hypot(d[:, 0], d[:, 1])
    chi = traj.chi[:, :2]
    L = (d[:, 0] * chi[:, 1] - d[:, 1] * chi[:, 0]) / traj.intensity
    alpha = misalignment(traj.position[:, :2], chi, center)
    phi = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    return RadialDiagnostics(-np.ones_like(r), L, r, phi, alpha)


def fit_convergence(traj, center=(0.0, 0.0)):
    """Least-squares slope of ln r against t over the interior 80% of samples."""
    d = traj.position[:, :2] - np.asarray(center, float)
    r = np.hypot(d[:, 0], d[:, 1])
    if len(r) < 5 or not np.all(np.diff(r) < 0):
        raise PreconditionError("trajectory is not strictly ingoing")
    n = len(r)
    lo, hi = int(round(0.1 * n)), int(round(0.9 * n))
    if hi - lo < 2:
        lo, hi = 0, n
    slope, _ = np.polyfit(traj.t[lo:hi], np.log(r[lo:hi]), 1)
    return float(slope)


def _endpoint_constant(traj, field, end):
    idx = [0, 1] if end == "start" else [-1, -2]
    if field is not None:
        p = traj.position[idx[0]]
        g = np.asarray(field.grad(p))
        return float(np.linalg.norm(g)) <= 1e-9
    a, b = traj.intensity[idx[0]], traj.intensity[idx[1]]
    return abs(a - b) <= 1e-12 * max(1.0, abs(a))


def turning_angle(traj, field=None):
    """Signed unwrapped heading change (final minus initial), radians."""
    if traj.dim != 2:
        raise PreconditionError("turning angle is defined for planar trajectories")
    if len(traj) < 2:
        raise PreconditionError("trajectory has fewer than two samples")
    for end in ("start", "end"):
        if not _endpoint_constant(traj, field, end):
            raise PreconditionError(f"trajectory {end} is not in a constant-intensity region")
    return float(traj.heading[-1] - traj.heading[0])


def speed_ratio(field, traj):
    """|velocity| / I at each sample for geodesic trajectories."""
    rhs = geodesic2d_rhs(field)
    out = []
    for x, y, th, s in zip(traj.x, traj.y, traj.heading, traj.s):
        d = rhs(0.0, np.array([x, y, th, s]))
        out.append(math.hypot(d[0], d[1]) / d[3])
    return np.array(out)
