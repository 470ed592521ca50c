"""Three-dimensional intensity fields for the 3D heading law."""

import numpy as np

from .errors import ConfigError, OutOfDomainError
from .fields import DEFAULT_FLOOR


class Field3:
    """Base for 3D fields.  ``value_and_grad`` takes scalars x, y, z."""

    floor = DEFAULT_FLOOR

    def value_and_grad(self, x, y, z):
        raise NotImplementedError

    def contains(self, x, y, z):
        return True

    def eval(self, p):
        return self.value_and_grad(*map(float, p))[0]

    def grad(self, p):
        return np.asarray(self.value_and_grad(*map(float, p))[1])

    def _clamped(self, v, g):
        if not v >= self.floor:
            return self.floor, (0.0, 0.0, 0.0)
        return v, g


class Constant3(Field3):
    def __init__(self, value=1.0):
        self.c = float(value)

    def value_and_grad(self, x, y, z):
        return self._clamped(self.c, (0.0, 0.0, 0.0))


class Linear3(Field3):
    def __init__(self, value=1.0, gradient=(0.0, 0.0, 0.0)):
        self.c = float(value)
        self.g = tuple(float(v) for v in gradient)
        if len(self.g) != 3:
            raise ConfigError("gradient must have three components", "gradient")

    def value_and_grad(self, x, y, z):
        gx, gy, gz = self.g
        return self._clamped(self.c + gx * x + gy * y + gz * z, self.g)


class Radial3(Field3):
    """Spherically symmetric field: ``proportional`` (I = r) or ``fisheye``."""

    def __init__(self, kind="proportional", center=(0.0, 0.0, 0.0), radius=1.0):
        if kind not in ("proportional", "fisheye"):
            raise ConfigError(f"unsupported radial kind {kind!r}", "kind")
        self.kind = kind
        self.center = np.asarray(center, float)
        self.radius = float(radius)

    def value_and_grad(self, x, y, z):
        d = np.array([x, y, z]) - self.center
        r = float(np.sqrt(d @ d))
        if self.kind == "proportional":
            g = d / r if r > 0 else np.zeros(3)
            return self._clamped(r, tuple(g))
        q = r / self.radius
        return self._clamped(0.5 * (1 + q * q), tuple(d / self.radius ** 2))


class Extruded(Field3):
    """z-independent extension of a planar ScalarField."""

    def __init__(self, field2):
        self.field2 = field2
        self.floor = field2.floor

    def contains(self, x, y, z):
        return bool(self.field2.domain.contains(x, y))

    def value_and_grad(self, x, y, z):
        if not self.contains(x, y, z):
            raise OutOfDomainError(f"point {(x, y, z)} outside planar domain", (x, y, z))
        v, (gx, gy) = self.field2.value_and_grad(x, y)
        return float(v), (float(gx), float(gy), 0.0)
