"""Holomorphic coordinate maps and the pullback of virtual-space fields.

A map sends physical points ``z`` to virtual points ``w``.  A control field
designed in virtual space is carried back to physical space as

    I_phys(z) = I_virt(w(z)) / |w'(z)|

and geodesics of one field map onto geodesics of the other at equal
coordinate times.
"""

import cmath
import math
import threading

import numpy as np

from . import fields
from .domains import Plane, domain_from_dict
from .errors import ConfigError, InversionError, SingularPointError

INVERSE_TOL = 1e-10
NEWTON_MAX_ITER = 60

_MAP_KINDS = {}


def _register(cls):
    _MAP_KINDS[cls.kind] = cls
    return cls


def _cplx(v):
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _pair(c):
    c = complex(c)
    return [c.real, c.imag]


def _branch_log(z, cut):
    """log z with arg in (cut - 2 pi, cut]."""
    a = np.angle(z)
    arg = cut - np.mod(cut - a, 2 * np.pi)
    return np.log(np.abs(z)) + 1j * arg


class ConformalMap:
    """Orientation-preserving holomorphic map ``z -> w``.

    Subclasses implement ``forward`` and ``derivatives``; ``inverse`` defaults
    to Newton iteration from a seed.
    """

    kind = "abstract"

    def __init__(self, domain=None):
        self.domain = domain if domain is not None else Plane()

    def forward(self, z):
        raise NotImplementedError

    def derivatives(self, z):
        """Return ``(w'(z), w''(z))``."""
        raise NotImplementedError

    def evaluate(self, z):
        """``(w, w', w'')`` in one call."""
        return (self.forward(z),) + tuple(self.derivatives(z))

    def inverse(self, w, seed=None):
        return newton_inverse(self, w, seed if seed is not None else w)

    def _params(self):
        return {}

    def to_dict(self):
        d = {"kind": self.kind, **self._params()}
        if not isinstance(self.domain, Plane):
            d["domain"] = self.domain.to_dict()
        return d

    def __call__(self, z):
        return self.forward(z)


def newton_inverse(m, w, seed, tol=INVERSE_TOL, max_iter=NEWTON_MAX_ITER):
    """Solve m(z) = w by damped Newton iteration from ``seed``."""
    w = complex(w)
    z = complex(seed)
    scale = max(1.0, abs(w))
    res = abs(complex(m.forward(z)) - w)
    for _ in range(max_iter):
        if res <= tol * scale:
            return z
        d1, _ = m.derivatives(z)
        d1 = complex(d1)
        if d1 == 0:
            break
        step = (complex(m.forward(z)) - w) / d1
        lam = 1.0
        while lam > 1e-6:
            cand = z - lam * step
            try:
                cres = abs(complex(m.forward(cand)) - w)
            except SingularPointError:
                cres = math.inf
            if cres < res:
                z, res = cand, cres
                break
            lam *= 0.5
        else:
            break
    if res <= tol * scale:
        return z
    raise InversionError(f"inverse of {m.kind} map did not converge for w={w}; "
                         f"residual {res:.3e}", residual=res)


@_register
class Identity(ConformalMap):
    kind = "identity"

    def forward(self, z):
        return np.asarray(z, complex)[()]

    def derivatives(self, z):
        shape = np.shape(z)
        return np.ones(shape, complex)[()], np.zeros(shape, complex)[()]

    def inverse(self, w, seed=None):
        return complex(w)


@_register
class Affine(ConformalMap):
    """w = a z + b, a != 0."""

    kind = "affine"

    def __init__(self, a=1.0, b=0.0, domain=None):
        super().__init__(domain)
        self.a, self.b = complex(a), complex(b)
        if self.a == 0:
            raise ConfigError("affine coefficient a must be nonzero", "a")

    def forward(self, z):
        return self.a * np.asarray(z, complex)[()] + self.b

    def derivatives(self, z):
        shape = np.shape(z)
        return np.full(shape, self.a)[()], np.zeros(shape, complex)[()]

    def inverse(self, w, seed=None):
        return (complex(w) - self.b) / self.a

    def _params(self):
        return {"a": _pair(self.a), "b": _pair(self.b)}


@_register
class Moebius(ConformalMap):
    """w = (a z + b) / (c z + d) with ad - bc != 0."""

    kind = "moebius"

    def __init__(self, a=1.0, b=0.0, c=0.0, d=1.0, domain=None):
        super().__init__(domain)
        self.a, self.b, self.c, self.d = map(complex, (a, b, c, d))
        self.det = self.a * self.d - self.b * self.c
        if self.det == 0:
            raise ConfigError("moebius map is degenerate (ad - bc = 0)", "d")

    def _den(self, z):
        z = np.asarray(z, complex)
        den = self.c * z + self.d
        if np.any(np.abs(den) <= 1e-14 * (abs(self.c) + abs(self.d))):
            raise SingularPointError(f"moebius pole at z={-self.d / self.c}", -self.d / self.c)
        return z, den

    def forward(self, z):
        z, den = self._den(z)
        return ((self.a * z + self.b) / den)[()]

    def derivatives(self, z):
        _, den = self._den(z)
        d1 = self.det / den ** 2
        return d1[()], (-2.0 * self.c * d1 / den)[()]

    def inverse(self, w, seed=None):
        w = complex(w)
        den = -self.c * w + self.a
        if den == 0:
            raise SingularPointError(f"w={w} is the image of infinity", w)
        return (self.d * w - self.b) / den

    def _params(self):
        return {k: _pair(getattr(self, k)) for k in "abcd"}


@_register
class Power(ConformalMap):
    """w = z^k on the branch with arg z in (branch_cut - 2 pi, branch_cut]."""

    kind = "power"

    def __init__(self, k=2.0, branch_cut=math.pi, domain=None):
        super().__init__(domain)
        self.k = float(k)
        if self.k == 0:
            raise ConfigError("power exponent must be nonzero", "k")
        self.branch_cut = float(branch_cut)
        self._integer = self.k == int(self.k)

    def _check(self, z):
        z = np.asarray(z, complex)
        if self.k != 1 and np.any(z == 0):
            raise SingularPointError("power map is not conformal at z=0", 0j)
        return z

    def _pow(self, z, k):
        if self._integer and k == int(k):
            return z ** int(k)
        return np.exp(k * _branch_log(z, self.branch_cut))

    def forward(self, z):
        z = self._check(z)
        return self._pow(z, self.k)[()]

    def derivatives(self, z):
        z = self._check(z)
        k = self.k
        return (k * self._pow(z, k - 1))[()], (k * (k - 1) * self._pow(z, k - 2))[()]

    def inverse(self, w, seed=None):
        w = complex(w)
        if w == 0:
            raise SingularPointError("w=0 is the image of the branch point", w)
        if seed is None:
            seed = cmath.exp(cmath.log(w) / self.k)
        log_w = cmath.log(w)
        m_max = int(math.ceil(abs(self.k))) + 1
        best = None
        for m in range(-m_max, m_max + 1):
            cand = cmath.exp((log_w + 2j * math.pi * m) / self.k)
            if abs(complex(self.forward(cand)) - w) > INVERSE_TOL * max(1.0, abs(w)):
                continue
            if best is None or abs(cand - seed) < abs(best - seed):
                best = cand
        if best is None:
            raise InversionError(f"no preimage of {w} on the chosen branch", residual=None)
        return best

    def _params(self):
        return {"k": self.k, "branch_cut": self.branch_cut}


@_register
class Exp(ConformalMap):
    kind = "exp"

    def forward(self, z):
        return np.exp(np.asarray(z, complex))[()]

    def derivatives(self, z):
        e = np.exp(np.asarray(z, complex))[()]
        return e, e

    def inverse(self, w, seed=None):
        w = complex(w)
        if w == 0:
            raise SingularPointError("exp never reaches 0", w)
        base = cmath.log(w)
        if seed is None:
            return base
        m = round((complex(seed).imag - base.imag) / (2 * math.pi))
        return base + 2j * math.pi * m


@_register
class Log(ConformalMap):
    """w = log z with arg in (branch_cut - 2 pi, branch_cut]."""

    kind = "log"

    def __init__(self, branch_cut=math.pi, domain=None):
        super().__init__(domain)
        self.branch_cut = float(branch_cut)

    def _check(self, z):
        z = np.asarray(z, complex)
        if np.any(z == 0):
            raise SingularPointError("log has a branch point at z=0", 0j)
        return z

    def forward(self, z):
        return _branch_log(self._check(z), self.branch_cut)[()]

    def derivatives(self, z):
        z = self._check(z)
        return (1.0 / z)[()], (-1.0 / z ** 2)[()]

    def inverse(self, w, seed=None):
        w = complex(w)
        if not (self.branch_cut - 2 * math.pi < w.imag <= self.branch_cut):
            raise InversionError(f"w={w} lies outside the image of the chosen log branch")
        return cmath.exp(w)

    def _params(self):
        return {"branch_cut": self.branch_cut}


@_register
class Chain(ConformalMap):
    """Composition evaluated left to right: ``Chain([f, g])(z) = g(f(z))``."""

    kind = "chain"

    def __init__(self, maps, domain=None):
        super().__init__(domain)
        self.maps = tuple(maps)
        if not self.maps:
            raise ConfigError("chain needs at least one map", "maps")

    def forward(self, z):
        for m in self.maps:
            z = m.forward(z)
        return z

    def evaluate(self, z):
        w = z
        d1 = 1.0
        d2 = 0.0
        for m in self.maps:
            w, m1, m2 = m.evaluate(w)
            # (g o f)'' = g''(f) f'^2 + g'(f) f''
            d2 = m2 * d1 * d1 + m1 * d2
            d1 = m1 * d1
        return w, d1, d2

    def derivatives(self, z):
        return self.evaluate(z)[1:]

    def inverse(self, w, seed=None):
        seeds = [None] * len(self.maps)
        if seed is not None:
            s = complex(seed)
            for i, m in enumerate(self.maps):
                seeds[i] = s
                s = complex(m.forward(s))
        z = complex(w)
        for m, s in zip(reversed(self.maps), reversed(seeds)):
            z = m.inverse(z, seed=s)
        return z

    def to_dict(self):
        d = super().to_dict()
        d["maps"] = [m.to_dict() for m in self.maps]
        return d


@_register
class Inverse(ConformalMap):
    """Inverse of another map, e.g. polygon -> disk for a Schwarz-Christoffel map.

    Each point is found by the base map's ``inverse``; the previous solution
    (kept per thread) seeds the next one, which keeps a trajectory on one
    branch and makes successive lookups cheap.
    """

    kind = "inverse"

    def __init__(self, base, domain=None):
        super().__init__(domain if domain is not None else getattr(base, "image_domain", None))
        self.base = base
        self._local = threading.local()

    def _solve(self, z):
        z = complex(z)
        last = getattr(self._local, "last", None)
        seed = None
        if last is not None:
            z_prev, w_prev, d1_prev = last
            seed = w_prev + (z - z_prev) / d1_prev
        try:
            w = self.base.inverse(z, seed=seed)
        except InversionError:
            if seed is None:
                raise
            w = self.base.inverse(z, seed=None)
        d1, d2 = self.base.derivatives(w)
        d1, d2 = complex(d1), complex(d2)
        self._local.last = (z, w, d1)
        return w, d1, d2

    def evaluate(self, z):
        if np.ndim(z):
            zf = np.asarray(z, complex).ravel()
            out = np.array([self._solve(v) for v in zf]).T
            shape = np.shape(z)
            w = out[0].reshape(shape)
            d1 = out[1].reshape(shape)
            d2 = out[2].reshape(shape)
        else:
            w, d1, d2 = self._solve(z)
        if np.any(d1 == 0):
            raise SingularPointError("inverse map singular where base derivative vanishes")
        return w, 1.0 / d1, -d2 / d1 ** 3

    def forward(self, z):
        return self.evaluate(z)[0]

    def derivatives(self, z):
        return self.evaluate(z)[1:]

    def inverse(self, w, seed=None):
        return complex(self.base.forward(w))

    def to_dict(self):
        return {"kind": self.kind, "map": self.base.to_dict()}


def map_from_dict(d, context=None):
    """Rebuild a map from its dict form; complex values are [re, im] pairs."""
    kind = d.get("kind")
    dom = domain_from_dict(d["domain"]) if "domain" in d else None
    if kind == "identity":
        return Identity(dom)
    if kind == "affine":
        return Affine(_cplx(d.get("a", 1.0)), _cplx(d.get("b", 0.0)), domain=dom)
    if kind == "moebius":
        return Moebius(*(_cplx(d.get(k, dv)) for k, dv in zip("abcd", (1, 0, 0, 1))), domain=dom)
    if kind == "power":
        return Power(d.get("k", 2.0), d.get("branch_cut", math.pi), domain=dom)
    if kind == "exp":
        return Exp(dom)
    if kind == "log":
        return Log(d.get("branch_cut", math.pi), domain=dom)
    if kind == "chain":
        return Chain([map_from_dict(m, context) for m in d["maps"]], domain=dom)
    if kind == "inverse":
        return Inverse(map_from_dict(d["map"], context), domain=dom)
    if kind in _MAP_KINDS and hasattr(_MAP_KINDS[kind], "from_dict"):
        return _MAP_KINDS[kind].from_dict(d, context)
    raise ConfigError(f"unknown map kind {kind!r}", "kind")


# ------------------------------------------------------------------ pullback

@fields._register
class Pullback(fields.Expr):
    """Physical-space intensity I_virt(w(z)) / |w'(z)|.

    The gradient follows from the chain rule: with G the virtual gradient as
    a complex number, grad I_phys = (G conj(w') - I_virt conj(w''/w')) / |w'|.
    """

    kind = "pullback"

    def __init__(self, cmap, virtual):
        if not isinstance(virtual, fields.ScalarField):
            virtual = fields.ScalarField(virtual)
        self.cmap = cmap
        self.virtual = virtual
        self._freeze()

    def value(self, x, y):
        z = np.asarray(x, float) + 1j * np.asarray(y, float)
        w, d1, _ = self.cmap.evaluate(z)
        return (self.virtual.value(np.real(w), np.imag(w)) / np.abs(d1))[()]

    def value_and_grad(self, x, y):
        z = np.asarray(x, float) + 1j * np.asarray(y, float)
        w, d1, d2 = self.cmap.evaluate(z)
        iv, (gx, gy) = self.virtual.value_and_grad(np.real(w), np.imag(w))
        mag = np.abs(d1)
        G = np.asarray(gx) + 1j * np.asarray(gy)
        grad = (G * np.conj(d1) - iv * np.conj(d2 / d1)) / mag
        return (iv / mag)[()], (np.real(grad)[()], np.imag(grad)[()])

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def to_dict(self):
        return {"kind": self.kind, "map": self.cmap.to_dict(), "field": self.virtual.to_dict()}

    @classmethod
    def from_dict(cls, d, context=None):
        return cls(map_from_dict(d["map"], context), fields.ScalarField.from_dict(d["field"]))


def pullback(cmap, virtual_field, domain=None, floor=None, ceiling=None):
    """Physical-space :class:`~artspace.fields.ScalarField` for ``virtual_field``.

    The identity map returns ``virtual_field`` itself.
    """
    if isinstance(cmap, Identity) and domain is None:
        return virtual_field
    if domain is None and not isinstance(cmap.domain, Plane):
        domain = cmap.domain
    return fields.ScalarField(
        Pullback(cmap, virtual_field), domain=domain,
        floor=virtual_field.floor if floor is None else floor,
        ceiling=virtual_field.ceiling if ceiling is None else ceiling)


def push_pose(cmap, pose):
    """Map a pose to virtual space: position by w, heading rotated by arg w'."""
    from .sim import RobotPose

    z = complex(pose.x, pose.y)
    w, d1, _ = cmap.evaluate(z)
    w, d1 = complex(w), complex(d1)
    if d1 == 0:
        raise SingularPointError(f"map is not conformal at {z}", z)
    return RobotPose(w.real, w.imag, pose.theta + cmath.phase(d1), pose.delta)


def map_forward(m, z):
    return m.forward(z)


def map_derivatives(m, z):
    return m.derivatives(z)


def map_inverse(m, w, seed=None):
    return m.inverse(w, seed=seed)
