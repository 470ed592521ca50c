"""Randomized invariants of fields, maps and rasters."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artspace import Affine, Chain, Exp, Moebius, Power
from artspace.fields import (
    Clamp, Eaton, Fisheye, Grin, Linear, Product, Proportional, Transform,
)
from artspace.raster import intensity_to_level, level_to_intensity

PRIMITIVES = {
    "linear": Linear(1.0, (0.3, -0.2)),
    "proportional": Proportional(gain=1.5),
    "fisheye": Fisheye(radius=1.3),
    "eaton": Eaton(theta_turn=math.pi / 2, radius=1.0),
    "eaton-pi": Eaton(theta_turn=math.pi, radius=1.0),
    "grin": Grin(n0=1.0, A=0.08),
}


def _fd_grad(expr, x, y, h=1e-6):
    gx = (expr.value(x + h, y) - expr.value(x - h, y)) / (2 * h)
    gy = (expr.value(x, y + h) - expr.value(x, y - h)) / (2 * h)
    return gx, gy


class TestGradientConsistency:
    @pytest.mark.parametrize("name", sorted(PRIMITIVES))
    def test_thousand_points(self, name):
        expr = PRIMITIVES[name]
        rng = np.random.default_rng(11)
        pts = rng.uniform(-2.0, 2.0, size=(1000, 2))
        # keep clear of the centre singularity and the lens rim kink
        r = np.hypot(pts[:, 0], pts[:, 1])
        keep = (r > 0.05) & (np.abs(r - 1.0) > 1e-3) & (np.abs(r - 1.3) > 1e-3)
        keep &= np.abs(np.abs(pts[:, 1]) - 0.9 * math.sqrt(2 / 0.08)) > 1e-3
        x, y = pts[keep, 0], pts[keep, 1]
        gx, gy = expr.grad(x, y)
        fx, fy = _fd_grad(expr, x, y)
        mag = np.hypot(gx, gy)
        err = np.hypot(gx - fx, gy - fy)
        assert np.all(err <= 1e-5 * (1 + mag))

    def test_combinator_gradients(self):
        expr = Product([Transform(Eaton(), (0.5, 0.2), 0.7, 1.8), Linear(2.0, (0.1, 0.1))])
        rng = np.random.default_rng(3)
        for x, y in rng.uniform(-1.0, 2.0, size=(200, 2)):
            r = math.hypot(x - 0.5, y - 0.2)
            if r < 0.05 or abs(r - 1.8) < 1e-3:
                continue
            g = expr.grad(x, y)
            f = _fd_grad(expr, x, y)
            assert math.hypot(g[0] - f[0], g[1] - f[1]) <= 1e-5 * (1 + math.hypot(*g))


coords = st.floats(-3.0, 3.0, allow_nan=False)


class TestRotationEquivariance:
    @settings(max_examples=200, deadline=None)
    @given(x=coords, y=coords, phi=st.floats(-math.pi, math.pi))
    def test_rotated_lens(self, x, y, phi):
        base = Grin(n0=1.0, A=0.08, aperture=3.0)
        rotated = Transform(base, (0.0, 0.0), phi, 1.0)
        c, s = math.cos(phi), math.sin(phi)
        xr, yr = c * x - s * y, s * x + c * y
        assert rotated.value(xr, yr) == pytest.approx(base.value(x, y), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(x=coords, y=coords, phi=st.floats(-math.pi, math.pi),
           cx=st.floats(-2, 2), cy=st.floats(-2, 2))
    def test_rotated_and_translated_linear(self, x, y, phi, cx, cy):
        base = Linear(1.0, (0.4, -0.3))
        moved = Transform(base, (cx, cy), phi, 1.0)
        c, s = math.cos(phi), math.sin(phi)
        xr, yr = cx + c * x - s * y, cy + s * x + c * y
        assert moved.value(xr, yr) == pytest.approx(base.value(x, y), abs=1e-12)


class TestClampMonotonicity:
    @settings(max_examples=50, deadline=None)
    @given(floor=st.floats(0.0, 0.5), span=st.floats(0.1, 3.0))
    def test_never_leaves_band(self, floor, span):
        ceiling = floor + span
        c = Clamp(Product([Proportional(), Fisheye()]), floor, ceiling)
        xs, ys = np.meshgrid(np.linspace(-3, 3, 41), np.linspace(-3, 3, 41))
        v = c.value(xs, ys)
        assert v.min() >= floor and v.max() <= ceiling


class TestMapInvariants:
    @settings(max_examples=100, deadline=None)
    @given(re=st.floats(0.2, 2.0), im=st.floats(0.2, 2.0))
    def test_chain_derivative_is_product(self, re, im):
        a, b = Affine(1.5 - 0.5j, 0.3), Power(2.0)
        ch = Chain([a, b])
        z = complex(re, im)
        d_chain = complex(ch.derivatives(z)[0])
        d_prod = complex(a.derivatives(z)[0]) * complex(b.derivatives(complex(a.forward(z)))[0])
        assert abs(abs(d_chain) - abs(d_prod)) <= 1e-12 * max(1.0, abs(d_prod))

    @settings(max_examples=100, deadline=None)
    @given(re=st.floats(-2.0, 2.0), im=st.floats(-2.0, 2.0))
    def test_moebius_round_trip(self, re, im):
        m = Moebius(1.0, -1j, 1.0, 1j)
        z = complex(re, im)
        if abs(z + 1j) < 1e-2:
            return
        assert abs(complex(m.inverse(complex(m.forward(z)))) - z) <= 1e-10 * max(1, abs(z))

    @settings(max_examples=100, deadline=None)
    @given(re=st.floats(-2.0, 2.0), im=st.floats(-3.0, 3.0))
    def test_exp_round_trip_with_seed(self, re, im):
        m = Exp()
        z = complex(re, im)
        w = complex(m.forward(z))
        assert abs(complex(m.inverse(w, seed=z + 0.1)) - z) <= 1e-10


class TestLevelMap:
    @settings(max_examples=200, deadline=None)
    @given(a=st.floats(0.0, 10.0), b=st.floats(0.0, 10.0))
    def test_linear_monotone(self, a, b):
        lo, hi = sorted((a, b))
        la, lb = intensity_to_level([lo, hi], "linear", 0.0, 10.0)
        assert la <= lb

    @settings(max_examples=200, deadline=None)
    @given(a=st.floats(1e-6, 10.0), b=st.floats(1e-6, 10.0))
    def test_log_monotone(self, a, b):
        lo, hi = sorted((a, b))
        la, lb = intensity_to_level([lo, hi], "log", 1e-6, 10.0)
        assert la <= lb

    def test_level_round_trip_is_identity(self):
        levels = np.arange(256)
        for mode, lo in (("linear", 0.0), ("log", 1e-3)):
            back = intensity_to_level(level_to_intensity(levels, mode, lo, 2.0), mode, lo, 2.0)
            np.testing.assert_array_equal(back, levels)
