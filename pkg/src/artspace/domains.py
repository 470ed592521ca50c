"""Planar evaluation domains.

The same shapes double as patch regions, so every domain exposes
``contains``, ``boundary_distance`` and a characteristic ``scale``.
"""

import math

import numpy as np

from .errors import ConfigError


class Domain:
    kind = "abstract"

    def contains(self, x, y):
        raise NotImplementedError

    def boundary_distance(self, x, y):
        """Unsigned distance from (x, y) to the boundary."""
        raise NotImplementedError

    @property
    def scale(self):
        return 1.0

    def bounds(self):
        """(xmin, xmax, ymin, ymax) of a bounding box."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class Plane(Domain):
    kind = "plane"

    def contains(self, x, y):
        return np.isfinite(x) & np.isfinite(y)

    def boundary_distance(self, x, y):
        return np.full(np.broadcast(x, y).shape, np.inf)

    @property
    def scale(self):
        return math.inf

    def bounds(self):
        return (-np.inf, np.inf, -np.inf, np.inf)

    def to_dict(self):
        return {"kind": "plane"}

    def __repr__(self):
        return "Plane()"


class Rect(Domain):
    kind = "rect"

    def __init__(self, xmin, xmax, ymin, ymax):
        if not (xmax > xmin and ymax > ymin):
            raise ConfigError(f"degenerate rectangle {(xmin, xmax, ymin, ymax)}", "bounds")
        self.xmin, self.xmax = float(xmin), float(xmax)
        self.ymin, self.ymax = float(ymin), float(ymax)

    def contains(self, x, y):
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)

    def boundary_distance(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        dx = np.minimum(np.abs(x - self.xmin), np.abs(x - self.xmax))
        dy = np.minimum(np.abs(y - self.ymin), np.abs(y - self.ymax))
        inside_x = (x >= self.xmin) & (x <= self.xmax)
        inside_y = (y >= self.ymin) & (y <= self.ymax)
        # outside: distance to the nearest edge segment
        ox = np.where(inside_x, 0.0, dx)
        oy = np.where(inside_y, 0.0, dy)
        outside = np.hypot(ox, oy)
        return np.where(inside_x & inside_y, np.minimum(dx, dy), outside)

    @property
    def scale(self):
        return max(self.xmax - self.xmin, self.ymax - self.ymin)

    def bounds(self):
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    def to_dict(self):
        return {"kind": "rect", "xmin": self.xmin, "xmax": self.xmax,
                "ymin": self.ymin, "ymax": self.ymax}

    def __repr__(self):
        return f"Rect({self.xmin}, {self.xmax}, {self.ymin}, {self.ymax})"


class Disk(Domain):
    kind = "disk"

    def __init__(self, center=(0.0, 0.0), radius=1.0):
        if not radius > 0:
            raise ConfigError(f"disk radius must be positive, got {radius}", "radius")
        self.cx, self.cy = float(center[0]), float(center[1])
        self.radius = float(radius)

    @property
    def center(self):
        return (self.cx, self.cy)

    def contains(self, x, y):
        return np.hypot(x - self.cx, y - self.cy) <= self.radius

    def boundary_distance(self, x, y):
        return np.abs(np.hypot(x - self.cx, y - self.cy) - self.radius)

    @property
    def scale(self):
        return 2.0 * self.radius

    def bounds(self):
        r = self.radius
        return (self.cx - r, self.cx + r, self.cy - r, self.cy + r)

    def to_dict(self):
        return {"kind": "disk", "center": [self.cx, self.cy], "radius": self.radius}

    def __repr__(self):
        return f"Disk({self.center}, {self.radius})"


class PolygonDomain(Domain):
    """Closed simple polygon given by its vertex list."""

    kind = "polygon"

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ConfigError("polygon needs at least three (x, y) vertices", "vertices")
        self.vertices = v

    def contains(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        vx, vy = self.vertices[:, 0], self.vertices[:, 1]
        n = len(vx)
        for i in range(n):
            x1, y1 = vx[i], vy[i]
            x2, y2 = vx[(i + 1) % n], vy[(i + 1) % n]
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < xint)
        return inside | (self.boundary_distance(x, y) <= 1e-12 * self.scale)

    def boundary_distance(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        best = np.full(np.broadcast(x, y).shape, np.inf)
        v = self.vertices
        n = len(v)
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            d = b - a
            t = np.clip(((x - a[0]) * d[0] + (y - a[1]) * d[1]) / (d @ d), 0.0, 1.0)
            best = np.minimum(best, np.hypot(x - a[0] - t * d[0], y - a[1] - t * d[1]))
        return best

    @property
    def scale(self):
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(span.max())

    def bounds(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return (lo[0], hi[0], lo[1], hi[1])

    def to_dict(self):
        return {"kind": "polygon", "vertices": self.vertices.tolist()}

    def __repr__(self):
        return f"PolygonDomain({len(self.vertices)} vertices)"


def domain_from_dict(d):
    kind = d.get("kind")
    if kind == "plane":
        return Plane()
    if kind == "rect":
        return Rect(d["xmin"], d["xmax"], d["ymin"], d["ymax"])
    if kind == "disk":
        return Disk(d.get("center", (0.0, 0.0)), d["radius"])
    if kind == "polygon":
        return PolygonDomain(d["vertices"])
    raise ConfigError(f"unknown domain kind {kind!r}", "kind")


def regions_overlap(a, b, tol=1e-12):
    """True when the interiors of two disk/rect regions intersect."""
    if isinstance(a, Disk) and isinstance(b, Disk):
        return math.hypot(a.cx - b.cx, a.cy - b.cy) < a.radius + b.radius - tol
    if isinstance(a, Rect) and isinstance(b, Rect):
        return (min(a.xmax, b.xmax) - max(a.xmin, b.xmin) > tol
                and min(a.ymax, b.ymax) - max(a.ymin, b.ymin) > tol)
    if isinstance(a, Rect) and isinstance(b, Disk):
        a, b = b, a
    if isinstance(a, Disk) and isinstance(b, Rect):
        px = min(max(a.cx, b.xmin), b.xmax)
        py = min(max(a.cy, b.ymin), b.ymax)
        return math.hypot(a.cx - px, a.cy - py) < a.radius - tol
    # unknown shapes: assume the worst
    return True
