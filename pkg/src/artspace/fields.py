"""Scalar intensity fields: primitives, lens profiles and combinators.

Intensity ``I`` sets robot speed and is the inverse of an optical index,
``I = 1/n``.  Fields are expression trees of :class:`Expr` nodes wrapped by a
:class:`ScalarField`, which adds an evaluation domain and a floor/ceiling
clamp.  All ``Expr`` methods broadcast over numpy arrays of ``x`` and ``y``.
"""

from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from .domains import Disk, Domain, Plane, Rect, domain_from_dict, regions_overlap
from .errors import AmbiguityError, ConfigError, OutOfDomainError, SeamError

DEFAULT_FLOOR = 1e-6
FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
SEAM_TOL = 1e-10

_EXPR_KINDS = {}


def _register(cls):
    _EXPR_KINDS[cls.kind] = cls
    return cls


class Expr:
    """Node of a field expression tree.

    Subclasses implement ``value``; ``grad`` falls back to central
    differences with step ``cbrt(eps) * fd_scale``.
    """

    kind = "abstract"
    fd_scale = 1.0

    def value(self, x, y):
        raise NotImplementedError

    def grad(self, x, y):
        h = FD_STEP * self.fd_scale
        gx = (self.value(x + h, y) - self.value(x - h, y)) / (2 * h)
        gy = (self.value(x, y + h) - self.value(x, y - h)) / (2 * h)
        return gx, gy

    def value_and_grad(self, x, y):
        return self.value(x, y), self.grad(x, y)

    def radial_center(self):
        """Center about which the node is radially symmetric, else None."""
        return None

    def to_dict(self):
        raise NotImplementedError

    def __setattr__(self, name, val):
        if getattr(self, "_frozen", False):
            raise AttributeError(f"{type(self).__name__} is immutable")
        object.__setattr__(self, name, val)

    def _freeze(self):
        object.__setattr__(self, "_frozen", True)


# ---------------------------------------------------------------- primitives

@_register
class Constant(Expr):
    kind = "constant"

    def __init__(self, value=1.0):
        self.c = float(value)
        self._freeze()

    def value(self, x, y):
        return np.full(np.broadcast(x, y).shape, self.c)[()]

    def grad(self, x, y):
        z = np.zeros(np.broadcast(x, y).shape)[()]
        return z, z

    def radial_center(self):
        return "any"

    def to_dict(self):
        return {"kind": self.kind, "value": self.c}


@_register
class Linear(Expr):
    """I = value + g . (x, y)."""

    kind = "linear"

    def __init__(self, value=1.0, gradient=(0.0, 0.0)):
        self.c = float(value)
        self.gx, self.gy = float(gradient[0]), float(gradient[1])
        self._freeze()

    def value(self, x, y):
        return self.c + self.gx * np.asarray(x, float) + self.gy * np.asarray(y, float)

    def grad(self, x, y):
        shape = np.broadcast(x, y).shape
        return np.full(shape, self.gx)[()], np.full(shape, self.gy)[()]

    def to_dict(self):
        return {"kind": self.kind, "value": self.c, "gradient": [self.gx, self.gy]}


@_register
class Proportional(Expr):
    """I = gain * r, optionally held constant beyond ``extent``."""

    kind = "proportional"

    def __init__(self, gain=1.0, extent=None):
        if not gain > 0:
            raise ConfigError(f"proportional gain must be positive, got {gain}", "gain")
        if extent is not None and not extent > 0:
            raise ConfigError(f"extent must be positive, got {extent}", "extent")
        self.gain = float(gain)
        self.extent = None if extent is None else float(extent)
        self._freeze()

    def value(self, x, y):
        r = np.hypot(x, y)
        if self.extent is not None:
            r = np.minimum(r, self.extent)
        return self.gain * r

    def value_and_grad(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        r = np.hypot(x, y)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(r > 0, x / r, 0.0)
            uy = np.where(r > 0, y / r, 0.0)
        g = self.gain
        if self.extent is not None:
            outside = r > self.extent
            ux = np.where(outside, 0.0, ux)
            uy = np.where(outside, 0.0, uy)
            r = np.minimum(r, self.extent)
        return (g * r)[()], ((g * ux)[()], (g * uy)[()])

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def radial_center(self):
        return (0.0, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "gain": self.gain, "extent": self.extent}


class _RadialIndexLens(Expr):
    """Radial profile defined through its index n(r); I = 1/n.

    Subclasses give ``_index(r)`` and ``_index_dr(r)`` valid for
    ``r <= self.cutoff``; beyond it the value at the cutoff is held.
    """

    cutoff = None

    def _index(self, r):
        raise NotImplementedError

    def _index_dr(self, r):
        raise NotImplementedError

    def value(self, x, y):
        r = np.hypot(x, y)
        if self.cutoff is not None:
            r = np.minimum(r, self.cutoff)
        with np.errstate(divide="ignore", invalid="ignore"):
            return 1.0 / self._index(r)

    def value_and_grad(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        r = np.hypot(x, y)
        inside = np.ones(r.shape, dtype=bool) if self.cutoff is None else r < self.cutoff
        rc = r if self.cutoff is None else np.minimum(r, self.cutoff)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            n = self._index(rc)
            dn = self._index_dr(rc)
            dI = -dn / (n * n)
            ok = inside & (r > 0) & np.isfinite(dI)
            gx = np.where(ok, dI * x / np.where(r > 0, r, 1.0), 0.0)
            gy = np.where(ok, dI * y / np.where(r > 0, r, 1.0), 0.0)
            val = 1.0 / n
        return val[()], (gx[()], gy[()])

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def radial_center(self):
        return (0.0, 0.0)


@_register
class Fisheye(_RadialIndexLens):
    """Maxwell fisheye, n = 2 / (1 + (r/radius)^2).

    ``radius`` is the circle on which n = 1.  The profile is unbounded by
    default; ``extent`` truncates it with a constant continuation.
    """

    kind = "fisheye"

    def __init__(self, radius=1.0, extent=None):
        if not radius > 0:
            raise ConfigError(f"fisheye radius must be positive, got {radius}", "radius")
        if extent is not None and not extent > 0:
            raise ConfigError(f"extent must be positive, got {extent}", "extent")
        self.radius = float(radius)
        self.cutoff = None if extent is None else float(extent)
        self._freeze()

    def _index(self, r):
        q = r / self.radius
        return 2.0 / (1.0 + q * q)

    def _index_dr(self, r):
        q = r / self.radius
        return -4.0 * q / (self.radius * (1.0 + q * q) ** 2)

    # closed form is cheaper and exact at r = 0
    def value(self, x, y):
        r = np.hypot(x, y)
        if self.cutoff is not None:
            r = np.minimum(r, self.cutoff)
        q = r / self.radius
        return 0.5 * (1.0 + q * q)

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius, "extent": self.cutoff}


@_register
class Eaton(_RadialIndexLens):
    """Approximate turning lens, n = (2R/r - 1)^(theta/(theta + pi)) for r < R."""

    kind = "eaton"

    def __init__(self, theta_turn=math.pi / 2, radius=1.0):
        if not (0 < theta_turn <= math.pi):
            raise ConfigError(f"theta_turn must lie in (0, pi], got {theta_turn}", "theta_turn")
        if not radius > 0:
            raise ConfigError(f"eaton radius must be positive, got {radius}", "radius")
        self.theta_turn = float(theta_turn)
        self.radius = float(radius)
        self.exponent = self.theta_turn / (self.theta_turn + math.pi)
        self.cutoff = self.radius
        self._freeze()

    def _index(self, r):
        return (2.0 * self.radius / r - 1.0) ** self.exponent

    def _index_dr(self, r):
        R, p = self.radius, self.exponent
        return p * (2.0 * R / r - 1.0) ** (p - 1.0) * (-2.0 * R / (r * r))

    def value(self, x, y):
        r = np.minimum(np.hypot(x, y), self.radius)
        with np.errstate(divide="ignore"):
            u = 2.0 * self.radius / r - 1.0
        return u ** (-self.exponent)

    def to_dict(self):
        return {"kind": self.kind, "theta_turn": self.theta_turn, "radius": self.radius}


@_register
class Grin(Expr):
    """Graded-index slab along the x axis, n = n0 (1 - A s^2 / 2) with s = y.

    Beyond ``|s| = aperture`` the index is held at its aperture value.
    """

    kind = "grin"

    def __init__(self, n0=1.0, A=0.08, aperture=None):
        if not A > 0:
            raise ConfigError(f"gradient parameter A must be positive, got {A}", "A")
        if not n0 > 0:
            raise ConfigError(f"n0 must be positive, got {n0}", "n0")
        limit = math.sqrt(2.0 / A)
        if aperture is None:
            aperture = 0.9 * limit
        if not (0 < aperture < limit):
            raise ConfigError(
                f"aperture must lie in (0, sqrt(2/A) = {limit:.6g}), got {aperture}", "aperture")
        self.n0 = float(n0)
        self.A = float(A)
        self.aperture = float(aperture)
        self._freeze()

    def value(self, x, y):
        s = np.minimum(np.abs(np.asarray(y, float)), self.aperture)
        s = np.broadcast_to(s, np.broadcast(x, y).shape)
        return (1.0 / (self.n0 * (1.0 - 0.5 * self.A * s * s)))[()]

    def value_and_grad(self, x, y):
        y = np.asarray(y, float)
        shape = np.broadcast(x, y).shape
        s = np.broadcast_to(np.minimum(np.abs(y), self.aperture), shape)
        n = self.n0 * (1.0 - 0.5 * self.A * s * s)
        dn_ds = -self.n0 * self.A * s
        gy = np.where(np.abs(y) < self.aperture, -dn_ds / (n * n) * np.sign(y), 0.0)
        return (1.0 / n)[()], (np.zeros(shape)[()], np.broadcast_to(gy, shape)[()])

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def to_dict(self):
        return {"kind": self.kind, "n0": self.n0, "A": self.A, "aperture": self.aperture}


# --------------------------------------------------------------- combinators

@_register
class Product(Expr):
    """Multiplies index profiles, so intensities multiply: I = I_1 * I_2 * ..."""

    kind = "product"

    def __init__(self, operands):
        operands = tuple(operands)
        if len(operands) < 2:
            raise ConfigError("product needs at least two operands", "operands")
        self.operands = operands
        self._freeze()

    def value(self, x, y):
        out = self.operands[0].value(x, y)
        for op in self.operands[1:]:
            out = out * op.value(x, y)
        return out

    def value_and_grad(self, x, y):
        vals, grads = zip(*(op.value_and_grad(x, y) for op in self.operands))
        total = vals[0]
        for v in vals[1:]:
            total = total * v
        gx = 0.0
        gy = 0.0
        for i, (gxi, gyi) in enumerate(grads):
            rest = 1.0
            for j, v in enumerate(vals):
                if j != i:
                    rest = rest * v
            gx = gx + gxi * rest
            gy = gy + gyi * rest
        return np.asarray(total)[()], (np.asarray(gx)[()], np.asarray(gy)[()])

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def radial_center(self):
        centers = {op.radial_center() for op in self.operands} - {"any"}
        if not centers:
            return "any"
        return centers.pop() if len(centers) == 1 else None

    def to_dict(self):
        return {"kind": self.kind, "operands": [op.to_dict() for op in self.operands]}


@_register
class Patch(Expr):
    """Replaces ``background`` inside each region by the region's field.

    Regions must be disjoint unless ``ordered`` is set, in which case the
    first listed region wins where they overlap.
    """

    kind = "patch"

    def __init__(self, background, pieces, ordered=False):
        pieces = tuple((region, expr) for region, expr in pieces)
        if not pieces:
            raise ConfigError("patch needs at least one region", "patches")
        if not ordered:
            for i in range(len(pieces)):
                for j in range(i + 1, len(pieces)):
                    if regions_overlap(pieces[i][0], pieces[j][0]):
                        raise AmbiguityError(
                            f"patch regions {i} and {j} overlap; set ordered=True to "
                            f"give the first precedence", "patches")
        self.background = background
        self.pieces = pieces
        self.ordered = bool(ordered)
        self._freeze()

    def _select(self, x, y):
        shape = np.broadcast(x, y).shape
        choice = np.full(shape, -1)
        for k in range(len(self.pieces) - 1, -1, -1):
            region = self.pieces[k][0]
            choice = np.where(region.contains(x, y), k, choice)
        return choice

    def value(self, x, y):
        out = np.asarray(self.background.value(x, y), float)
        choice = self._select(x, y)
        out = np.broadcast_to(out, choice.shape).copy()
        for k, (_, expr) in enumerate(self.pieces):
            mask = choice == k
            if np.any(mask):
                out = np.where(mask, expr.value(x, y), out)
        return out[()]

    def _check_seam(self, x, y):
        for region, _ in self.pieces:
            d = region.boundary_distance(x, y)
            if np.any(d < SEAM_TOL * max(1.0, region.scale)):
                raise SeamError(f"gradient requested on patch seam at ({x}, {y})", (x, y))

    def value_and_grad(self, x, y):
        self._check_seam(x, y)
        val, (gx, gy) = self.background.value_and_grad(x, y)
        choice = self._select(x, y)
        val = np.broadcast_to(val, choice.shape).copy()
        gx = np.broadcast_to(gx, choice.shape).copy()
        gy = np.broadcast_to(gy, choice.shape).copy()
        for k, (_, expr) in enumerate(self.pieces):
            mask = choice == k
            if np.any(mask):
                v, (px, py) = expr.value_and_grad(x, y)
                val = np.where(mask, v, val)
                gx = np.where(mask, px, gx)
                gy = np.where(mask, py, gy)
        return val[()], (gx[()], gy[()])

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def radial_center(self):
        centers = [self.background.radial_center()]
        for region, expr in self.pieces:
            if not isinstance(region, Disk):
                return None
            centers += [region.center, expr.radial_center()]
        if None in centers:
            return None
        concrete = {c for c in centers if c != "any"}
        if not concrete:
            return "any"
        return concrete.pop() if len(concrete) == 1 else None

    def to_dict(self):
        return {"kind": self.kind, "background": self.background.to_dict(),
                "patches": [{"region": r.to_dict(), "field": e.to_dict()}
                            for r, e in self.pieces],
                "ordered": self.ordered}


@_register
class Transform(Expr):
    """Places ``inner`` at a similarity: p = center + scale * R(rotation) q."""

    kind = "transform"

    def __init__(self, inner, center=(0.0, 0.0), rotation=0.0, scale=1.0):
        if not scale > 0:
            raise ConfigError(f"scale must be positive, got {scale}", "scale")
        self.inner = inner
        self.cx, self.cy = float(center[0]), float(center[1])
        self.rotation = float(rotation)
        self.scale = float(scale)
        self._c = math.cos(self.rotation)
        self._s = math.sin(self.rotation)
        self._freeze()

    def _local(self, x, y):
        dx = (np.asarray(x, float) - self.cx) / self.scale
        dy = (np.asarray(y, float) - self.cy) / self.scale
        return self._c * dx + self._s * dy, -self._s * dx + self._c * dy

    def value(self, x, y):
        return self.inner.value(*self._local(x, y))

    def value_and_grad(self, x, y):
        v, (gu, gv) = self.inner.value_and_grad(*self._local(x, y))
        gx = (self._c * gu - self._s * gv) / self.scale
        gy = (self._s * gu + self._c * gv) / self.scale
        return v, (gx, gy)

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def radial_center(self):
        c = self.inner.radial_center()
        if c in ("any", None):
            return c
        u, v = c
        x = self.cx + self.scale * (self._c * u - self._s * v)
        y = self.cy + self.scale * (self._s * u + self._c * v)
        return (x, y)

    def to_dict(self):
        return {"kind": self.kind, "field": self.inner.to_dict(),
                "center": [self.cx, self.cy], "rotation": self.rotation, "scale": self.scale}


@_register
class Clamp(Expr):
    kind = "clamp"

    def __init__(self, inner, floor=0.0, ceiling=math.inf):
        if floor < 0:
            raise ConfigError(f"floor must be non-negative, got {floor}", "floor")
        if not ceiling > floor:
            raise ConfigError(f"ceiling {ceiling} must exceed floor {floor}", "ceiling")
        self.inner = inner
        self.floor = float(floor)
        self.ceiling = float(ceiling)
        self._freeze()

    def value(self, x, y):
        return np.clip(self.inner.value(x, y), self.floor, self.ceiling)

    def value_and_grad(self, x, y):
        v, (gx, gy) = self.inner.value_and_grad(x, y)
        return _clamp_with_grad(v, gx, gy, self.floor, self.ceiling)

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def radial_center(self):
        return self.inner.radial_center()

    def to_dict(self):
        return {"kind": self.kind, "field": self.inner.to_dict(),
                "floor": self.floor, "ceiling": _json_float(self.ceiling)}


def _clamp_with_grad(v, gx, gy, floor, ceiling):
    v = np.asarray(v, float)
    flat = (v < floor) | (v > ceiling) | ~np.isfinite(v)
    v = np.clip(np.nan_to_num(v, nan=floor, posinf=ceiling), floor, ceiling)
    gx = np.where(flat, 0.0, gx)
    gy = np.where(flat, 0.0, gy)
    return v[()], (gx[()], gy[()])


def _json_float(x):
    return None if math.isinf(x) else x


# ---------------------------------------------------------------- ScalarField

class ScalarField:
    """An intensity field: expression tree + domain + clamp.

    ``eval`` and ``grad`` accept a point ``(x, y)`` or an array of shape
    ``(..., 2)``.  Points outside the domain raise :class:`OutOfDomainError`.
    """

    def __init__(self, expr, domain=None, floor=DEFAULT_FLOOR, ceiling=math.inf):
        if isinstance(expr, ScalarField):
            expr = expr.expr
        if floor is None:
            floor = DEFAULT_FLOOR
        if ceiling is None:
            ceiling = math.inf
        if floor < 0:
            raise ConfigError(f"floor must be non-negative, got {floor}", "floor")
        if not ceiling > floor:
            raise ConfigError(f"ceiling {ceiling} must exceed floor {floor}", "ceiling")
        object.__setattr__(self, "expr", expr)
        object.__setattr__(self, "domain", domain if domain is not None else Plane())
        object.__setattr__(self, "floor", float(floor))
        object.__setattr__(self, "ceiling", float(ceiling))

    def __setattr__(self, name, val):
        raise AttributeError("ScalarField is immutable")

    @staticmethod
    def _split(p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 2:
            raise ValueError(f"points must have trailing dimension 2, got shape {p.shape}")
        return p[..., 0], p[..., 1]

    def _check(self, x, y):
        if not np.all(self.domain.contains(x, y)):
            bad = ~np.asarray(self.domain.contains(x, y))
            if bad.ndim:
                idx = np.argwhere(bad)[0]
                pt = (float(np.asarray(x)[tuple(idx)]), float(np.asarray(y)[tuple(idx)]))
            else:
                pt = (float(x), float(y))
            raise OutOfDomainError(f"point {pt} outside field domain {self.domain!r}", pt)

    # Expr protocol so a ScalarField can sit inside another tree
    def value(self, x, y):
        self._check(x, y)
        return np.clip(self.expr.value(x, y), self.floor, self.ceiling)

    def value_and_grad(self, x, y):
        self._check(x, y)
        v, (gx, gy) = self.expr.value_and_grad(x, y)
        return _clamp_with_grad(v, gx, gy, self.floor, self.ceiling)

    def grad_xy(self, x, y):
        return self.value_and_grad(x, y)[1]

    def eval(self, p):
        return self.value(*self._split(p))

    def grad(self, p):
        gx, gy = self.grad_xy(*self._split(p))
        return np.stack([gx, gy], axis=-1)

    def radial_center(self):
        return self.expr.radial_center()

    def to_dict(self):
        return {"expr": self.expr.to_dict(), "domain": self.domain.to_dict(),
                "floor": self.floor, "ceiling": _json_float(self.ceiling)}

    @classmethod
    def from_dict(cls, d, domain=None):
        if "kind" in d:
            return cls(expr_from_dict(d), domain=domain)
        dom = domain_from_dict(d["domain"]) if "domain" in d else domain
        return cls(expr_from_dict(d["expr"]), domain=dom,
                   floor=d.get("floor", DEFAULT_FLOOR), ceiling=d.get("ceiling"))

    def __repr__(self):
        return f"ScalarField({self.expr.kind}, domain={self.domain!r}, floor={self.floor})"


# ------------------------------------------------------------ lens factories

LENS_KINDS = ("proportional", "grin", "fisheye", "eaton", "constant", "linear")


@dataclass(frozen=True)
class Placement:
    center: tuple = (0.0, 0.0)
    rotation: float = 0.0
    scale: float = 1.0

    @property
    def is_identity(self):
        return tuple(self.center) == (0.0, 0.0) and self.rotation == 0.0 and self.scale == 1.0


@dataclass(frozen=True)
class LensSpec:
    """Parameters of one primitive profile.

    ``value``/``gradient`` describe the constant and linear kinds directly in
    intensity; the lens kinds are described by their index profile.
    """

    kind: str
    n0: float = 1.0
    A: float = 0.08
    theta_turn: float = math.pi / 2
    radius: float = 1.0
    aperture: float = None
    extent: float = None
    gain: float = 1.0
    value: float = 1.0
    gradient: tuple = (0.0, 0.0)
    placement: Placement = dc_field(default_factory=Placement)


def make_expr(spec):
    kind = spec.kind
    if kind == "proportional":
        expr = Proportional(spec.gain, spec.extent)
    elif kind == "grin":
        expr = Grin(spec.n0, spec.A, spec.aperture)
    elif kind == "fisheye":
        expr = Fisheye(spec.radius, spec.extent)
    elif kind == "eaton":
        expr = Eaton(spec.theta_turn, spec.radius)
    elif kind == "constant":
        if spec.value < 0:
            raise ConfigError(f"constant intensity must be non-negative, got {spec.value}", "value")
        expr = Constant(spec.value)
    elif kind == "linear":
        expr = Linear(spec.value, spec.gradient)
    else:
        raise ConfigError(f"unknown lens kind {kind!r}; expected one of {LENS_KINDS}", "kind")
    p = spec.placement
    if not p.is_identity:
        expr = Transform(expr, p.center, p.rotation, p.scale)
    return expr


def make_field(spec, domain=None, floor=DEFAULT_FLOOR, ceiling=math.inf):
    return ScalarField(make_expr(spec), domain=domain, floor=floor, ceiling=ceiling)


def _as_expr(f):
    return f.expr if isinstance(f, ScalarField) else f


def product(*fields):
    return Product([_as_expr(f) for f in fields])


def patch(background, pieces, ordered=False):
    return Patch(_as_expr(background), [(r, _as_expr(f)) for r, f in pieces], ordered)


def transform(f, center=(0.0, 0.0), rotation=0.0, scale=1.0):
    return Transform(_as_expr(f), center, rotation, scale)


def clamp(f, floor=0.0, ceiling=math.inf):
    return Clamp(_as_expr(f), floor, ceiling)


def combine(op, *operands, domain=None, floor=None, ceiling=None, **kwargs):
    """Build a combined :class:`ScalarField`.

    ``op`` is one of ``product``, ``patch``, ``transform`` or ``clamp``.  The
    result inherits domain and clamp from the first ScalarField operand unless
    given explicitly.
    """
    first = next((o for o in operands if isinstance(o, ScalarField)), None)
    if op == "product":
        expr = product(*operands)
    elif op == "patch":
        if "pieces" in kwargs:
            (background,) = operands
            pieces = kwargs.pop("pieces")
        else:
            background, pieces = operands
        expr = patch(background, pieces, **kwargs)
    elif op == "transform":
        (inner,) = operands
        expr = transform(inner, **kwargs)
    elif op == "clamp":
        (inner,) = operands
        expr = clamp(inner, **kwargs)
    else:
        raise ConfigError(f"unknown combinator {op!r}", "op")
    if domain is None and first is not None:
        domain = first.domain
    if floor is None:
        floor = first.floor if first is not None else DEFAULT_FLOOR
    if ceiling is None:
        ceiling = first.ceiling if first is not None else math.inf
    return ScalarField(expr, domain=domain, floor=floor, ceiling=ceiling)


# ------------------------------------------------------------- serialization

def _placement_from(d):
    return Placement(tuple(d.get("center", (0.0, 0.0))), float(d.get("rotation", 0.0)),
                     float(d.get("scale", 1.0)))


def expr_from_dict(d):
    """Rebuild an expression tree from its dict form."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"field node must be an object with a 'kind', got {d!r}", "kind")
    kind = d["kind"]
    if kind in LENS_KINDS:
        params = {k: v for k, v in d.items() if k not in ("kind", "placement")}
        allowed = set(LensSpec.__dataclass_fields__) - {"kind", "placement"}
        unknown = set(params) - allowed
        if unknown:
            raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for {kind}", sorted(unknown)[0])
        if "gradient" in params:
            params["gradient"] = tuple(params["gradient"])
        placement = _placement_from(d.get("placement", {}))
        return make_expr(LensSpec(kind=kind, placement=placement, **params))
    if kind == "product":
        return Product([expr_from_dict(o) for o in d["operands"]])
    if kind == "patch":
        pieces = [(domain_from_dict(p["region"]), expr_from_dict(p["field"]))
                  for p in d["patches"]]
        return Patch(expr_from_dict(d["background"]), pieces, d.get("ordered", False))
    if kind == "transform":
        return Transform(expr_from_dict(d["field"]), d.get("center", (0.0, 0.0)),
                         d.get("rotation", 0.0), d.get("scale", 1.0))
    if kind == "clamp":
        ceiling = d.get("ceiling")
        return Clamp(expr_from_dict(d["field"]), d.get("floor", 0.0),
                     math.inf if ceiling is None else ceiling)
    if kind in _EXPR_KINDS:
        return _EXPR_KINDS[kind].from_dict(d)
    raise ConfigError(f"unknown field kind {kind!r}", "kind")


__all__ = [
    "Clamp", "Constant", "DEFAULT_FLOOR", "Disk", "Domain", "Eaton", "Expr", "Fisheye",
    "Grin", "LensSpec", "Linear", "Patch", "Placement", "Product", "Proportional", "Rect",
    "ScalarField", "Transform", "clamp", "combine", "expr_from_dict", "make_expr",
    "make_field", "patch", "product", "transform",
]
