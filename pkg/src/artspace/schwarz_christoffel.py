"""Schwarz-Christoffel maps from the unit disk onto simple polygons.

    f(z) = A + C * integral_0^z  prod_k (1 - t/z_k)^(alpha_k - 1) dt

The prevertices ``z_k`` are found by least squares in the logarithms of the
arc gaps between them, which keeps them ordered without constraints.
Integrals use compound Gauss-Jacobi quadrature: the panel next to a
prevertex carries the Jacobi weight of its singularity, later panels are
Gauss-Legendre with lengths capped at half the distance to the nearest
prevertex.
"""

import functools
import hashlib
import json
import math
import os

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares
from scipy.special import roots_jacobi, roots_legendre

from .conformal import ConformalMap, _register as _register_map
from .domains import Disk, PolygonDomain
from .errors import ConvergenceError, InversionError, OutOfDomainError, PolygonError

DEFAULT_ORDER = 16
MAX_PANELS = 400
CROWDING_LIMIT = 1e-12


@functools.lru_cache(maxsize=None)
def _legendre(n):
    return roots_legendre(n)


@functools.lru_cache(maxsize=None)
def _jacobi(n, beta):
    # weight (1 + x)^beta on [-1, 1]
    return roots_jacobi(n, 0.0, beta)


def _segments_intersect(p1, p2, q1, q2, eps=1e-14):
    def orient(a, b, c):
        return (b - a).real * (c - a).imag - (b - a).imag * (c - a).real

    def on_segment(a, b, c):
        return (min(a.real, b.real) - eps <= c.real <= max(a.real, b.real) + eps
                and min(a.imag, b.imag) - eps <= c.imag <= max(a.imag, b.imag) + eps)

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
            ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True
    return ((abs(d1) <= eps and on_segment(q1, q2, p1)) or (abs(d2) <= eps and on_segment(q1, q2, p2))
            or (abs(d3) <= eps and on_segment(p1, p2, q1)) or (abs(d4) <= eps and on_segment(p1, p2, q2)))


class Polygon:
    """Counterclockwise simple polygon with interior angles ``alpha * pi``."""

    def __init__(self, vertices):
        v = np.asarray(vertices)
        if v.ndim == 2 and v.shape[1] == 2 and not np.iscomplexobj(v):
            v = v[:, 0] + 1j * v[:, 1]
        v = np.asarray(v, complex).ravel()
        if len(v) < 3:
            raise PolygonError("polygon needs at least 3 vertices", "vertices")
        edges = np.roll(v, -1) - v
        if np.any(np.abs(edges) == 0):
            raise PolygonError("polygon has repeated consecutive vertices", "vertices")
        turn = np.angle(edges / np.roll(edges, 1))
        alpha = 1.0 - turn / math.pi
        if np.any(alpha <= 0) or np.any(alpha >= 2):
            raise PolygonError("polygon has a zero-angle spike", "vertices")
        total = float(np.sum(1.0 - alpha))
        if abs(total + 2.0) < 1e-9:
            raise PolygonError("polygon vertices must be listed counterclockwise", "vertices")
        if abs(total - 2.0) > 1e-9:
            raise PolygonError(f"angle condition violated: sum(1 - alpha) = {total:.12g}", "vertices")
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise PolygonError(f"polygon is not simple: edges {i} and {j} intersect",
                                       "vertices")
        self.vertices = v
        self.alpha = alpha
        self.domain = PolygonDomain(np.column_stack([v.real, v.imag]))

    def __len__(self):
        return len(self.vertices)

    @property
    def side_lengths(self):
        return np.abs(np.roll(self.vertices, -1) - self.vertices)

    @property
    def scale(self):
        return self.domain.scale

    def area_centroid(self):
        v = self.vertices
        x, y = v.real, v.imag
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area = cross.sum() / 2.0
        cx = ((x + xn) * cross).sum() / (6.0 * area)
        cy = ((y + yn) * cross).sum() / (6.0 * area)
        return complex(cx, cy)

    def contains(self, w):
        w = complex(w)
        return bool(self.domain.contains(w.real, w.imag))

    def strictly_contains(self, w):
        w = complex(w)
        return self.contains(w) and float(self.domain.boundary_distance(w.real, w.imag)) > 0

    def digest(self, center=None, order=DEFAULT_ORDER):
        payload = {"vertices": [[repr(float(z.real)), repr(float(z.imag))] for z in self.vertices],
                   "center": None if center is None else [repr(complex(center).real),
                                                          repr(complex(center).imag)],
                   "order": order}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class SCMap(ConformalMap):
    """Solved disk-to-polygon map.  Build with :func:`solve_parameters`."""

    kind = "sc"

    def __init__(self, polygon, prevertices, prefactor, center, order=DEFAULT_ORDER):
        super().__init__(Disk((0.0, 0.0), 1.0))
        self.polygon = polygon
        self.prevertices = np.asarray(prevertices, complex)
        self.prefactor = complex(prefactor)
        self.center = complex(center)
        self.order = int(order)
        self.beta = polygon.alpha - 1.0
        self.image_domain = polygon.domain
        self._vertex_integrals = np.array(
            [-self._integral(zk, 0.0, sing=k) for k, zk in enumerate(self.prevertices)])
        self._seed_table = None

    # -- quadrature ---------------------------------------------------------
    def _log_terms(self, zeta, skip=None):
        zeta = np.asarray(zeta, complex)
        terms = np.log(1.0 - zeta[..., None] / self.prevertices) * self.beta
        if skip is not None:
            terms[..., skip] = 0.0
        return terms.sum(axis=-1)

    def _integrand(self, zeta, skip=None):
        return np.exp(self._log_terms(zeta, skip))

    def _jacobi_panel(self, k, end):
        zk = self.prevertices[k]
        x, wts = _jacobi(self.order, float(self.beta[k]))
        zeta = zk + (end - zk) * (1.0 + x) / 2.0
        smooth = self._integrand(zeta, skip=k)
        factor = ((zk - end) / (2.0 * zk)) ** self.beta[k]
        return (end - zk) / 2.0 * factor * np.dot(wts, smooth)

    def _legendre_panel(self, a, b):
        x, wts = _legendre(self.order)
        zeta = (a + b) / 2.0 + (b - a) / 2.0 * x
        return (b - a) / 2.0 * np.dot(wts, self._integrand(zeta))

    def _integral(self, a, b, sing=None):
        """Integral of the SC integrand on the segment a -> b.

        ``sing`` names a prevertex sitting at ``a``.
        """
        a, b = complex(a), complex(b)
        if a == b:
            return 0j
        total = 0j
        start = a
        if sing is not None:
            others = np.delete(self.prevertices, sing)
            dmin = float(np.min(np.abs(others - a)))
            length = abs(b - a)
            h = min(length, 0.5 * dmin)
            end = b if h >= length else a + (b - a) * (h / length)
            total += self._jacobi_panel(sing, end)
            start = end
        panels = 0
        while start != b:
            d = float(np.min(np.abs(self.prevertices - start)))
            remaining = abs(b - start)
            h = min(remaining, 0.5 * d)
            end = b if h >= remaining else start + (b - start) * (h / remaining)
            total += self._legendre_panel(start, end)
            start = end
            panels += 1
            if panels > MAX_PANELS:
                raise ConvergenceError(
                    f"quadrature needs more than {MAX_PANELS} panels near z={b}; "
                    f"point is too close to a prevertex", residual=None)
        return total

    # -- map contract -------------------------------------------------------
    def _forward_scalar(self, z):
        z = complex(z)
        if abs(z) > 1.0 + 1e-12:
            raise OutOfDomainError(f"SC map is defined on the closed unit disk, got z={z}", z)
        dist = np.abs(self.prevertices - z)
        k = int(np.argmin(dist))
        if dist[k] == 0:
            return complex(self.polygon.vertices[k])
        if dist[k] < abs(z):
            val = self._vertex_integrals[k] + self._integral(self.prevertices[k], z, sing=k)
        else:
            val = self._integral(0.0, z)
        return self.center + self.prefactor * val

    def forward(self, z):
        if np.ndim(z):
            zz = np.asarray(z, complex)
            return np.array([self._forward_scalar(v) for v in zz.ravel()]).reshape(zz.shape)
        return self._forward_scalar(z)

    def derivatives(self, z):
        z = np.asarray(z, complex)
        d1 = self.prefactor * self._integrand(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            d2 = d1 * np.sum(self.beta / (z[..., None] - self.prevertices), axis=-1)
        return d1[()], d2[()]

    def _seeds(self):
        if self._seed_table is None:
            radii = np.linspace(0.0, 0.98, 15)
            pts = [0j]
            for r in radii[1:]:
                m = max(8, int(64 * r))
                pts.extend(r * np.exp(2j * np.pi * np.arange(m) / m))
            pts = np.array(pts)
            self._seed_table = (pts, self.forward(pts))
        return self._seed_table

    def _newton(self, w, z, tol, max_iter):
        res = abs(self._forward_scalar(z) - w)
        for it in range(max_iter):
            if res <= tol:
                return z, res, it
            d1 = complex(self.derivatives(z)[0])
            step = (self._forward_scalar(z) - w) / d1
            lam = 1.0
            while True:
                cand = z - lam * step
                if abs(cand) < 1.0:
                    cres = abs(self._forward_scalar(cand) - w)
                    if cres < res:
                        z, res = cand, cres
                        break
                lam *= 0.5
                if lam < 1e-10:
                    return z, res, it
        return z, res, max_iter

    def _continuation(self, w):
        """Follow f(z(t)) = A + t (w - A) from z(0) = 0."""
        dw = w - self.center

        def rhs(t, y):
            z = complex(y[0], y[1])
            if abs(z) >= 1.0:
                z = z / abs(z) * (1.0 - 1e-12)
            v = dw / complex(self.derivatives(z)[0])
            return [v.real, v.imag]

        sol = solve_ivp(rhs, (0.0, 1.0), [0.0, 0.0], rtol=1e-8, atol=1e-10)
        z = complex(sol.y[0, -1], sol.y[1, -1])
        if abs(z) >= 1.0:
            z = z / abs(z) * (1.0 - 1e-9)
        return z

    def inverse(self, w, seed=None, tol=None, max_iter=50):
        w = complex(w)
        if not self.polygon.contains(w):
            raise OutOfDomainError(f"w={w} lies outside the polygon", w)
        if tol is None:
            tol = 1e-12 * max(1.0, self.polygon.scale)
        attempts = []
        if seed is not None and abs(seed) < 1.0:
            attempts.append(lambda: complex(seed))
        attempts.append(lambda: self._continuation(w))

        def from_table():
            pts, imgs = self._seeds()
            return complex(pts[int(np.argmin(np.abs(imgs - w)))])

        attempts.append(from_table)
        best = (None, math.inf)
        for make_seed in attempts:
            z, res, _ = self._newton(w, make_seed(), tol, max_iter)
            if res <= tol:
                return z
            if res < best[1]:
                best = (z, res)
        if best[1] <= 1e-9 * max(1.0, self.polygon.scale):
            return best[0]
        raise InversionError(f"SC inverse did not converge for w={w}; residual {best[1]:.3e}",
                             residual=best[1])

    def to_dict(self):
        return {"kind": self.kind,
                "polygon": [[z.real, z.imag] for z in self.polygon.vertices],
                "center": [self.center.real, self.center.imag],
                "prevertices": [[z.real, z.imag] for z in self.prevertices],
                "prefactor": [self.prefactor.real, self.prefactor.imag],
                "order": self.order}

    @classmethod
    def from_dict(cls, d, context=None):
        poly = Polygon(d["polygon"])
        center = d.get("center")
        center = None if center is None else complex(center[0], center[1])
        order = d.get("order", DEFAULT_ORDER)
        if "prevertices" in d and "prefactor" in d:
            pv = [complex(a, b) for a, b in d["prevertices"]]
            pf = complex(*d["prefactor"])
            return cls(poly, pv, pf, center if center is not None else poly.area_centroid(), order)
        cache_dir = d.get("cache") or (context or {}).get("sc_cache")
        if cache_dir:
            return cached_solve(poly, cache_dir, center=center, order=order)
        return solve_parameters(poly, center=center, order=order)

    def __repr__(self):
        return f"SCMap({len(self.polygon)} vertices)"


_register_map(SCMap)


def _gaps_to_prevertices(y):
    e = np.exp(np.concatenate([y, [0.0]]))
    gaps = 2.0 * np.pi * e / e.sum()
    angles = np.concatenate([[0.0], np.cumsum(gaps[:-1])])
    return np.exp(1j * angles), gaps


@functools.lru_cache(maxsize=64)
def _solve_cached(key, vertices, center, order, tol):
    poly = Polygon(np.array(vertices))
    return _solve(poly, center, order, tol)


def _solve(poly, center, order, tol):
    n = len(poly)
    if center is None:
        center = poly.area_centroid()
    center = complex(center)
    if not poly.strictly_contains(center):
        raise PolygonError(f"conformal center {center} is not interior to the polygon; "
                           f"pass an explicit center", "center")
    w = poly.vertices
    scale = poly.scale
    probe = SCMap.__new__(SCMap)
    probe.polygon = poly
    probe.beta = poly.alpha - 1.0
    probe.order = order

    def vertex_integrals(y):
        probe.prevertices, _ = _gaps_to_prevertices(y)
        return np.array([-probe._integral(zk, 0.0, sing=k)
                         for k, zk in enumerate(probe.prevertices)])

    def residual(y):
        W = vertex_integrals(y)
        C = (w[0] - center) / W[0]
        r = (center + C * W[1:] - w[1:]) / scale
        return np.concatenate([r.real, r.imag])

    sol = least_squares(residual, np.zeros(n - 1), method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200 * n)
    y, r = sol.x, sol.fun
    # LM stalls around 1e-9 with its forward-difference Jacobian; polish
    for _ in range(8):
        if np.max(np.abs(r)) < 1e-14:
            break
        h = 1e-6
        J = np.column_stack([(residual(y + h * e) - residual(y - h * e)) / (2 * h)
                             for e in np.eye(n - 1)])
        dy = np.linalg.lstsq(J, -r, rcond=None)[0]
        y_new = y + dy
        r_new = residual(y_new)
        if np.max(np.abs(r_new)) >= np.max(np.abs(r)):
            break
        y, r = y_new, r_new
    prevertices, gaps = _gaps_to_prevertices(y)
    if gaps.min() < CROWDING_LIMIT:
        raise ConvergenceError(f"prevertex crowding: smallest gap {gaps.min():.3e} "
                               f"< {CROWDING_LIMIT}; decompose the polygon",
                               residual=float(np.max(np.abs(r))))
    W = vertex_integrals(y)
    C = (w[0] - center) / W[0]
    images = center + C * W
    side_err = float(np.max(np.abs(np.abs(np.roll(images, -1) - images) - poly.side_lengths)))
    vert_err = float(np.max(np.abs(images - w)))
    if max(side_err, vert_err) > tol * max(1.0, scale):
        raise ConvergenceError(f"SC parameter solve stagnated: vertex error {vert_err:.3e}, "
                               f"side error {side_err:.3e}", residual=max(side_err, vert_err))
    return prevertices, C, center


def solve_parameters(poly, tol=1e-8, center=None, order=DEFAULT_ORDER):
    """Solve the SC parameter problem for ``poly``.

    ``center`` is the image of z = 0 (defaults to the area centroid, which
    must lie inside the polygon).  Prevertex 0 is pinned at z = 1.
    """
    if not isinstance(poly, Polygon):
        poly = Polygon(poly)
    key = poly.digest(center, order)
    verts = tuple((float(z.real), float(z.imag)) for z in poly.vertices)
    pv, C, c = _solve_cached(key, verts, None if center is None else complex(center), order, tol)
    return SCMap(poly, pv, C, c, order)


def cache_path(poly, cache_dir, center=None, order=DEFAULT_ORDER):
    return os.path.join(cache_dir, f"sc-{poly.digest(center, order)[:16]}.json")


def cached_solve(poly, cache_dir, center=None, order=DEFAULT_ORDER, tol=1e-8):
    """Solve ``poly`` or load its prevertices from ``cache_dir``."""
    if not isinstance(poly, Polygon):
        poly = Polygon(poly)
    path = cache_path(poly, cache_dir, center, order)
    if os.path.exists(path):
        with open(path) as fh:
            data = json.load(fh)
        return SCMap.from_dict(data)
    m = solve_parameters(poly, tol=tol, center=center, order=order)
    os.makedirs(cache_dir, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(m.to_dict(), fh, indent=1)
    return m


def sc_forward(m, z):
    return m.forward(z)


def sc_inverse(m, w, seed=None):
    return m.inverse(w, seed=seed)
