"""Acceptance criteria, each at its stated tolerance.

Every check returns ``(passed, detail)``; the test asserts ``passed`` and a
one-line PASS/FAIL summary per criterion is printed at the end of the run
(see ``conftest.py``).  ``python tests/test_acceptance.py`` prints the same
lines without pytest.
"""

import math
import time

import mpmath as mp
import numpy as np
import pytest

from artspace import (
    Disk, Extruded, Linear3, Moebius, Affine, Patch, Polygon, Pose3, Power, Radial3, Rect,
    RobotPose, ScalarField, SimOptions, field_from_raster, make_field, LensSpec, pullback,
    push_pose, rasterize, simulate_geodesic2d, simulate_geodesic3d, simulate_robot,
    solve_parameters, turning_angle,
)
from artspace.fields import Constant, Eaton, Transform
from artspace.scene import fit_circle
from artspace.sim import fit_convergence, radial_diagnostics

RESULTS = {}

# Eaton deflection for the unit-radius 90 degree profile, from the Bouguer
# integral pi - 2 * int b / (r sqrt(r^2 n^2 - b^2)) dr evaluated with mpmath.
EATON_TURN_B01 = 91.7330431078052
EATON_TURN_B06 = 90.0216411848928


def record(n, passed, detail):
    RESULTS[n] = (bool(passed), detail)
    line = f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}"
    print(line)
    return passed


def pose_at_misalignment(alpha0_deg, r0=1.0):
    """Pose at (r0, 0) whose heading makes angle alpha0 with the inward radial."""
    return RobotPose(r0, 0.0, math.pi + math.radians(alpha0_deg))


# --------------------------------------------------------------- criteria

def criterion_1():
    field = make_field(LensSpec("proportional"))
    opts = SimOptions(rtol=1e-9, t_max=10.0)
    worst = 0.0
    t0 = time.perf_counter()
    for a in (0, 30, -30, 60, -60, 85, -85):
        tr = simulate_geodesic2d(field, pose_at_misalignment(a), opts)
        slope = fit_convergence(tr)
        worst = max(worst, abs(slope + math.cos(math.radians(a))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 1.0
    return ok, f"max |slope + cos a0| = {worst:.2e} (tol 1e-4), runtime {elapsed:.2f} s (< 1 s)"


def criterion_2():
    # offset by 5 degrees so no start is exactly tangential (dr/dt = 0)
    field = make_field(LensSpec("proportional"), domain=Disk((0.0, 0.0), 10.5))
    opts = SimOptions(t_max=200.0, target=(0.0, 0.0), target_radius=1e-3)
    flips, misses = 0, 0
    for k in range(36):
        a = 5.0 + 10.0 * k
        a = (a + 180.0) % 360.0 - 180.0
        tr = simulate_geodesic2d(field, pose_at_misalignment(a), opts)
        drdt = tr.x * np.cos(tr.heading) + tr.y * np.sin(tr.heading)
        sign = np.sign(drdt)
        if not (np.all(sign == sign[0]) and sign[0] != 0):
            flips += 1
        r_end = math.hypot(*tr.position[-1])
        if abs(a) < 90 and not r_end < 1e-3 * (1 + 1e-9):
            misses += 1
        if abs(a) > 90 and not r_end > 10.0:
            misses += 1
    ok = flips == 0 and misses == 0
    return ok, f"36 headings: {flips} sign flips, {misses} missed r<1e-3 / r>10 outcomes"


def criterion_3():
    worst_L, worst_E = 0.0, 0.0
    runs = []
    prop = make_field(LensSpec("proportional"))
    for a in (30, -60, 85):
        runs.append((prop, pose_at_misalignment(a)))
    fish = make_field(LensSpec("fisheye"))
    for p in (RobotPose(0.5, 0.0, math.pi / 2), RobotPose(2.0, 0.0, math.radians(60)),
              RobotPose(0.3, -0.4, 0.2)):
        runs.append((fish, p))
    for field, pose in runs:
        tr = simulate_geodesic2d(field, pose, SimOptions(t_max=10.0))
        if tr.t[-1] < 10.0 - 1e-9:
            return False, f"trajectory from {pose} stopped early ({tr.reason})"
        d = radial_diagnostics(field, tr)
        worst_L = max(worst_L, d.L_drift)
        worst_E = max(worst_E, d.E_error)
    ok = worst_L <= 1e-6 and worst_E == 0.0
    return ok, f"E + 1 max = {worst_E:.1e} (exact), L relative drift max = {worst_L:.2e} (tol 1e-6)"


def _arc_time(field, pose, length=1.0):
    tr = simulate_geodesic2d(field, pose, SimOptions(t_max=20.0))
    if tr.s[-1] < length:
        raise AssertionError(f"path from {pose} shorter than {length}")
    return float(np.interp(length, tr.s, tr.t))


def criterion_4():
    maps = {"2z": Affine(2.0, 0.0), "z^2": Power(2.0),
            "(z-i)/(z+i)": Moebius(1.0, -1j, 1.0, 1j)}
    virtual = {"proportional": make_field(LensSpec("proportional")),
               "fisheye": make_field(LensSpec("fisheye"))}
    pose = RobotPose(0.6, 0.5, 0.3)
    worst = 0.0
    for m in maps.values():
        for F in virtual.values():
            phys = pullback(m, F)
            t1 = _arc_time(phys, pose)
            ts = np.linspace(0.0, t1, 101)
            opts = SimOptions(t_max=t1, sample_times=ts)
            a = simulate_geodesic2d(phys, pose, opts)
            b = simulate_geodesic2d(F, push_pose(m, pose), opts)
            if len(a) != len(ts) or len(b) != len(ts):
                return False, "trajectory ended before the unit arc length"
            w = np.array([complex(m.forward(complex(x, y))) for x, y in a.position])
            err = np.abs(w - (b.position[:, 0] + 1j * b.position[:, 1]))
            worst = max(worst, float(err.max()))
    return worst <= 1e-5, f"6 map/field pairs, max pushed-forward position error {worst:.2e} (tol 1e-5)"


def eaton_field():
    return make_field(LensSpec("eaton"), domain=Rect(-2.0, 2.0, -2.0, 2.0))


def double_eaton_field():
    lens = Eaton()
    expr = Patch(Constant(1.0), [(Disk((0.0, 0.0), 1.0), lens),
                                 (Disk((0.0, -2.05), 1.0), Transform(lens, (0.0, -2.05)))])
    return ScalarField(expr, domain=Rect(-3.0, 3.0, -4.5, 2.0))


def criterion_5():
    field = eaton_field()
    opts = SimOptions(t_max=40.0)
    head = abs(math.degrees(turning_angle(simulate_geodesic2d(
        field, RobotPose(-1.5, 0.1, 0.0), opts), field)))
    window = []
    for d in np.arange(-20.0, 20.0 + 1e-9, 5.0):
        tr = simulate_geodesic2d(field, RobotPose(-1.5, 0.1, math.radians(d)), opts)
        window.append(abs(math.degrees(turning_angle(tr, field))))
    dbl = abs(math.degrees(turning_angle(simulate_geodesic2d(
        double_eaton_field(), RobotPose(-1.5, 0.6, 0.0), opts))))
    worst = max(abs(t - 90.0) for t in window)
    ok = abs(head - 90.0) <= 2.0 and worst <= 5.0 and abs(dbl - 180.0) <= 4.0
    return ok, (f"head-on {head:.2f} deg (90 +/- 2), +/-20 deg window worst |T-90| = "
                f"{worst:.2f} (<= 5), double lens {dbl:.2f} deg (180 +/- 4)")


def criterion_6():
    field = make_field(LensSpec("fisheye"))
    T = 2.0 * math.pi
    worst_fit, worst_close = 0.0, 0.0
    for p in (RobotPose(1.0, 0.0, math.pi / 2), RobotPose(0.5, 0.0, math.pi / 2),
              RobotPose(2.0, 0.0, math.radians(60)), RobotPose(-0.3, 0.7, 2.5)):
        ts = np.linspace(0.0, T, 401)
        tr = simulate_geodesic2d(field, p, SimOptions(t_max=T, sample_times=ts))
        if abs(tr.t[-1] - T) > 1e-12:
            return False, f"orbit from {p} ended at t = {tr.t[-1]}"
        cx, cy, r, resid = fit_circle(tr.position)
        worst_fit = max(worst_fit, resid / r)
        worst_close = max(worst_close, float(np.linalg.norm(tr.position[-1] - tr.position[0])))
    ok = worst_fit <= 1e-3 and worst_close <= 1e-4
    return ok, (f"circle-fit residual / radius max {worst_fit:.1e} (<= 1e-3), "
                f"return error after 2 pi {worst_close:.1e} (<= 1e-4)")


def grin_period_dense(rtol, atol, amplitude=0.05, A=0.08):
    """Axial period from upward axis crossings located on dense output."""
    field = make_field(LensSpec("grin", n0=1.0, A=A), domain=Rect(-1.0, 100.0, -3.0, 3.0))
    ts = np.linspace(0.0, 95.0, 95001)
    tr = simulate_geodesic2d(field, RobotPose(0.0, amplitude, 0.0),
                             SimOptions(rtol=rtol, atol=atol, t_max=95.0, sample_times=ts))
    y, x = tr.y, tr.x
    idx = np.where((y[:-1] < 0) & (y[1:] >= 0))[0]
    xs = [x[i] + (x[i + 1] - x[i]) * (-y[i]) / (y[i + 1] - y[i]) for i in idx]
    return float((xs[-1] - xs[0]) / (len(xs) - 1))


def criterion_7():
    A = 0.08
    theory = 2.0 * math.pi / math.sqrt(A)
    reference = grin_period_dense(1e-12, 1e-14)
    measured = grin_period_dense(1e-9, 1e-12)
    ok = (abs(reference - theory) / theory <= 0.02 and abs(measured - theory) / theory <= 0.02
          and abs(measured - reference) / reference <= 1e-6)
    return ok, (f"period {measured:.6f} vs 2 pi / sqrt(A) = {theory:.6f} "
                f"({abs(measured - theory) / theory:.2%}, tol 2%); rtol 1e-12 reference "
                f"{reference:.6f}")


def deviation_ratios(field, pose, t_end):
    ts = np.linspace(0.0, t_end, 601)
    opts = SimOptions(t_max=t_end, sample_times=ts)
    g = simulate_geodesic2d(field, pose, opts)
    devs = []
    for delta in (0.02, 0.01, 0.005, 0.0025):
        r = simulate_robot(field, RobotPose(pose.x, pose.y, pose.theta, delta), opts)
        n = min(len(r), len(g))
        devs.append(float(np.max(np.linalg.norm(r.position[:n] - g.position[:n], axis=1))))
    return devs, [devs[i] / devs[i + 1] for i in range(3)]


def criterion_8():
    linear = make_field(LensSpec("linear", value=1.0, gradient=(0.1, 0.05)),
                        domain=Rect(-5.0, 5.0, -5.0, 5.0))
    lin_devs, lin_ratios = deviation_ratios(linear, RobotPose(0.0, 0.0, 0.3), 3.0)
    eat_devs, eat_ratios = deviation_ratios(eaton_field(), RobotPose(-1.5, 0.6, 0.0), 3.0)
    good = lambda rs: all(3.5 <= q <= 4.5 for q in rs)
    ok = good(lin_ratios) and good(eat_ratios)
    fmt = lambda rs: ", ".join(f"{q:.2f}" for q in rs)
    return ok, (f"linear ratios [{fmt(lin_ratios)}] (max dev {max(lin_devs):.1e}); "
                f"Eaton ratios [{fmt(eat_ratios)}]; band [3.5, 4.5]")


def _random_interior(poly, n, rng):
    lo = poly.vertices.real.min(), poly.vertices.imag.min()
    hi = poly.vertices.real.max(), poly.vertices.imag.max()
    pts = []
    while len(pts) < n:
        w = complex(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]))
        if poly.strictly_contains(w):
            pts.append(w)
    return pts


def mp_side_lengths(m):
    """Side lengths from mpmath quadrature of f' along paths through the origin."""
    mp.mp.dps = 20
    zk = [mp.mpc(z.real, z.imag) for z in m.prevertices]
    al = [mp.mpf(float(a)) for a in m.polygon.alpha]
    C = mp.mpc(m.prefactor.real, m.prefactor.imag)

    def fp(z):
        p = C
        for z0, a in zip(zk, al):
            p *= (1 - z / z0) ** (a - 1)
        return p

    n = len(zk)
    return [float(abs(mp.quad(fp, [zk[k], 0]) + mp.quad(fp, [0, zk[(k + 1) % n]])))
            for k in range(n)]


def criterion_9():
    rng = np.random.default_rng(7)
    details = []
    ok = True
    square = [(1, -1), (1, 1), (-1, 1), (-1, -1)]
    h = math.sqrt(3) / 2
    triangle = [(0, 0), (1, 0), (0.5, h)]
    quad = [(0, 0), (2, 0), (2, 1), (0, 1.5)]
    for name, verts, n in (("square", square, 4), ("triangle", triangle, 3), ("quad", quad, 4)):
        t0 = time.perf_counter()
        poly = Polygon(verts)
        m = solve_parameters(poly)
        if name != "quad":
            angles = np.unwrap(np.angle(m.prevertices))
            expected = 2 * math.pi * np.arange(n) / n
            sym = float(np.max(np.abs(np.mod(angles - expected + math.pi, 2 * math.pi) - math.pi)))
            ok &= sym <= 1e-8
            details.append(f"{name} prevertex error {sym:.1e}")
        else:
            sides = mp_side_lengths(m)
            serr = float(np.max(np.abs(np.array(sides) - poly.side_lengths)))
            ok &= serr <= 1e-8
            details.append(f"quad side error {serr:.1e}")
        trip = 0.0
        for w in _random_interior(poly, 100, rng):
            z = m.inverse(w)
            trip = max(trip, abs(complex(m.forward(z)) - w))
        elapsed = time.perf_counter() - t0
        ok &= trip <= 1e-8 and elapsed < 5.0
        details.append(f"{name} round trip {trip:.1e} in {elapsed:.2f} s")
    return ok, "; ".join(details) + " (tol 1e-8, < 5 s)"


def criterion_10():
    planar = make_field(LensSpec("eaton"), domain=Rect(-3.0, 3.0, -3.0, 3.0))
    ts = np.linspace(0.0, 3.0, 61)
    opts = SimOptions(t_max=10.0, sample_times=ts)
    t3 = simulate_geodesic3d(Extruded(planar), Pose3((-1.5, 0.6, 0.0), (1.0, 0.0, 0.0)), opts)
    t2 = simulate_geodesic2d(planar, RobotPose(-1.5, 0.6, 0.0), opts)
    chi_z = float(np.max(np.abs(t3.chi[:, 2])))
    path = float(np.max(np.linalg.norm(t3.position[:, :2] - t2.position, axis=1)))
    drift = float(np.max(np.abs(np.linalg.norm(t3.chi, axis=1) - 1.0)))
    others = [
        (Radial3("proportional"), Pose3((1.0, 0.2, 0.3), (-0.5, 0.4, 0.7))),
        (Radial3("fisheye"), Pose3((0.5, 0.0, 0.2), (0.0, 1.0, 0.3))),
        (Linear3(1.0, (0.1, -0.2, 0.05)), Pose3((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))),
    ]
    for f3, p in others:
        tr = simulate_geodesic3d(f3, p, SimOptions(t_max=5.0))
        drift = max(drift, float(np.max(np.abs(np.linalg.norm(tr.chi, axis=1) - 1.0))))
    ok = chi_z <= 1e-9 and path <= 1e-6 and drift <= 1e-9
    return ok, (f"chi_z max {chi_z:.1e} (<= 1e-9), planar path error {path:.1e} (<= 1e-6), "
                f"|chi| drift {drift:.1e} (<= 1e-9)")


def criterion_11():
    field = eaton_field()
    img = rasterize(field, (256, 256), mode="linear")
    xs, ys = img.node_coords()
    gx, gy = np.meshgrid(xs, ys)
    exact = field.value(gx, gy)
    quant = float(np.max(np.abs(img.intensities() - exact)))
    step = img.step()
    rec = field_from_raster(img)
    pose = RobotPose(-1.5, 0.1, 0.0)
    opts = SimOptions(t_max=40.0)
    analytic = math.degrees(turning_angle(simulate_geodesic2d(field, pose, opts)))
    recon = math.degrees(turning_angle(simulate_geodesic2d(rec, pose, opts)))
    ok = abs(recon - analytic) <= 5.0 and quant <= 2 * step
    return ok, (f"256^2 turn {recon:.2f} vs analytic {analytic:.2f} deg (+/- 5); pixel error "
                f"{quant / step:.3f} levels (<= 2)")


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 12)}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_acceptance(n):
    passed, detail = CRITERIA[n]()
    record(n, passed, detail)
    assert passed, detail


def test_eaton_oracle_head_on():
    """Integrator turning angle matches the Bouguer-integral oracle."""
    opts = SimOptions(t_max=40.0)
    for b, ref in ((0.1, EATON_TURN_B01), (0.6, EATON_TURN_B06)):
        tr = simulate_geodesic2d(eaton_field(), RobotPose(-1.5, b, 0.0), opts)
        assert abs(-math.degrees(turning_angle(tr)) - ref) < 1e-5


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        record(n, *fn())
