"""Grayscale rasters of intensity fields and bilinear reconstruction.

Grids sample the field at ``W x H`` nodes spaced evenly over the extent,
endpoints included, so node ``(i, j)`` sits at
``x = origin_x + j * extent_x / (W - 1)`` and
``y = origin_y + extent_y - i * extent_y / (H - 1)`` (row 0 is the top
row, as in image files).  Levels are 8-bit.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import json
import math
import os

import numpy as np

from . import fields
from .domains import Rect
from .errors import ConfigError, DegenerateRangeError, ParseError

MODES = ("linear", "log")
MID_GRAY = 128


@dataclass(frozen=True)
class RasterField:
    """Immutable 8-bit grid plus the metadata needed to invert the level map."""

    levels: np.ndarray
    origin: tuple = (0.0, 0.0)
    extent: tuple = (1.0, 1.0)
    mode: str = "linear"
    i_min: float = 0.0
    i_max: float = 1.0
    floor: float = fields.DEFAULT_FLOOR

    def __post_init__(self):
        lv = np.asarray(self.levels)
        if lv.ndim != 2 or lv.shape[0] < 2 or lv.shape[1] < 2:
            raise ConfigError(f"raster must be at least 2x2, got shape {lv.shape}", "levels")
        if lv.dtype != np.uint8:
            if np.any(lv < 0) or np.any(lv > 255) or np.any(lv != np.round(lv)):
                raise ConfigError("levels must be integers in 0..255", "levels")
            lv = lv.astype(np.uint8)
        lv = lv.copy()
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "extent", (float(self.extent[0]), float(self.extent[1])))
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", "mode")
        if not (self.extent[0] > 0 and self.extent[1] > 0):
            raise ConfigError(f"extent must be positive, got {self.extent}", "extent")
        if not self.i_max >= self.i_min:
            raise ConfigError("i_max must not be below i_min", "i_max")
        if self.mode == "log" and not self.i_min > 0:
            raise ConfigError("log mode needs a positive i_min", "i_min")

    @property
    def shape(self):
        return self.levels.shape

    @property
    def width(self):
        return self.levels.shape[1]

    @property
    def height(self):
        return self.levels.shape[0]

    @property
    def spacing(self):
        return (self.extent[0] / (self.width - 1), self.extent[1] / (self.height - 1))

    def node_coords(self):
        """1-D arrays of node x (left to right) and y (top to bottom)."""
        xs = np.linspace(self.origin[0], self.origin[0] + self.extent[0], self.width)
        ys = np.linspace(self.origin[1] + self.extent[1], self.origin[1], self.height)
        return xs, ys

    def step(self):
        """Intensity change of one level in linear mode (log: ratio step)."""
        return (self.i_max - self.i_min) / 255.0

    def intensities(self):
        """Intensity at every node recovered from its level."""
        return level_to_intensity(self.levels, self.mode, self.i_min, self.i_max)

    def metadata(self):
        return {"extent_x": self.extent[0], "extent_y": self.extent[1],
                "origin_x": self.origin[0], "origin_y": self.origin[1],
                "i_min": self.i_min, "i_max": self.i_max, "mode": self.mode,
                "floor": self.floor}

    def __eq__(self, other):
        if not isinstance(other, RasterField):
            return NotImplemented
        return (np.array_equal(self.levels, other.levels)
                and self.metadata() == other.metadata())

    __hash__ = None


def intensity_to_level(intensity, mode, i_min, i_max, floor=fields.DEFAULT_FLOOR):
    """Quantize intensities to 0..255; monotone non-decreasing in intensity."""
    v = np.asarray(intensity, float)
    if mode == "linear":
        u = (v - i_min) / (i_max - i_min)
    else:
        lo, hi = math.log(i_min), math.log(i_max)
        u = (np.log(np.maximum(v, floor)) - lo) / (hi - lo)
    return np.clip(np.round(255.0 * u), 0, 255).astype(np.uint8)


def level_to_intensity(levels, mode, i_min, i_max):
    u = np.asarray(levels, float) / 255.0
    if mode == "linear":
        return i_min + u * (i_max - i_min)
    lo, hi = math.log(i_min), math.log(i_max)
    return np.exp(lo + u * (hi - lo))


def _parse_res(res):
    if isinstance(res, int):
        return res, res
    if isinstance(res, str):
        try:
            w, h = res.lower().split("x")
            return int(w), int(h)
        except ValueError:
            raise ConfigError(f"resolution must look like WxH, got {res!r}", "res") from None
    w, h = res
    return int(w), int(h)


def _eval_row(field, xs, y):
    try:
        return np.asarray(field.value(xs, np.full_like(xs, y)), float)
    except (TypeError, ValueError):
        # scalar-only map inversions: evaluate point by point
        return np.array([float(field.value(x, y)) for x in xs])


def rasterize(field, res=(256, 256), extent=None, origin=None, mode="linear",
              i_min=None, i_max=None, allow_degenerate=False, workers=None):
    """Sample ``field`` on a node grid and quantize to 8-bit levels.

    ``extent``/``origin`` default to the bounds of the field's domain.
    Linear mode uses ``i_min = 0`` unless given; log mode uses the smallest
    sample clamped to the field floor.  An empty intensity range raises
    :class:`DegenerateRangeError` unless ``allow_degenerate`` is set, in which
    case the grid is uniform mid-gray.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}", "mode")
    w, h = _parse_res(res)
    if w < 2 or h < 2:
        raise ConfigError(f"grid must be at least 2x2, got {w}x{h}", "res")
    if extent is None or origin is None:
        xmin, xmax, ymin, ymax = field.domain.bounds()
        if not all(map(math.isfinite, (xmin, xmax, ymin, ymax))):
            raise ConfigError("unbounded domain: give extent and origin explicitly", "extent")
        if extent is None:
            extent = (xmax - xmin, ymax - ymin)
        if origin is None:
            origin = (xmin, ymin)
    if np.isscalar(extent):
        extent = (float(extent), float(extent))
    floor = getattr(field, "floor", fields.DEFAULT_FLOOR)
    xs = np.linspace(origin[0], origin[0] + extent[0], w)
    ys = np.linspace(origin[1] + extent[1], origin[1], h)
    if workers in (None, 0, 1):
        rows = [_eval_row(field, xs, y) for y in ys]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda y: _eval_row(field, xs, y), ys))
    values = np.vstack(rows)
    if not np.all(np.isfinite(values)):
        raise ConfigError("field produced non-finite samples on the raster extent", "field")

    if mode == "linear":
        lo = 0.0 if i_min is None else float(i_min)
    else:
        lo = max(float(values.min()), floor) if i_min is None else float(i_min)
    hi = float(values.max()) if i_max is None else float(i_max)
    meta = dict(origin=tuple(origin), extent=tuple(extent), mode=mode, floor=floor)
    if not hi > lo:
        if not allow_degenerate:
            raise DegenerateRangeError(f"intensity range is empty (I_min = I_max = {lo})")
        levels = np.full((h, w), MID_GRAY, dtype=np.uint8)
        return RasterField(levels, i_min=lo, i_max=max(hi, lo), **meta)
    levels = intensity_to_level(values, mode, lo, hi, floor)
    return RasterField(levels, i_min=lo, i_max=hi, **meta)


# ------------------------------------------------------------------ file io

def sidecar_path(path):
    return os.fspath(path) + ".json"


def write_image(r, path):
    """Write a binary graymap plus its JSON metadata sidecar."""
    path = os.fspath(path)
    header = f"P5\n{r.width} {r.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(r.levels).tobytes())
    with open(sidecar_path(path), "w") as fh:
        json.dump(r.metadata(), fh, indent=2)
        fh.write("\n")


def _tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise ParseError("unexpected end of header", pos)
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise ParseError(f"expected an integer, got {tok[:16]!r}", start)
        out.append((int(tok), start))
    return out, pos


def parse_pgm(data):
    """Parse P5 or P2 bytes into a uint8 array; errors carry byte offsets."""
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in (b"2", b"5"):
        raise ParseError("not a graymap: expected magic P2 or P5", 0)
    binary = data[1:2] == b"5"
    header, pos = _tokens(data, 3, 2)
    (w, wo), (h, ho), (maxval, mo) = header
    if w < 1:
        raise ParseError("width must be positive", wo)
    if h < 1:
        raise ParseError("height must be positive", ho)
    if maxval != 255:
        raise ParseError(f"only 8-bit graymaps (maxval 255) are supported, got {maxval}", mo)
    if binary:
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise ParseError("missing whitespace after header", pos)
        pos += 1
        need = w * h
        body = data[pos:pos + need]
        if len(body) < need:
            raise ParseError(f"pixel data truncated: need {need} bytes, have {len(body)}",
                             pos + len(body))
        if len(data) > pos + need:
            raise ParseError("trailing bytes after pixel data", pos + need)
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()
    vals, end = _tokens(data, w * h, pos)
    for v, off in vals:
        if v > 255:
            raise ParseError(f"sample {v} exceeds maxval", off)
    rest = data[end:]
    if rest.strip():
        raise ParseError("trailing data after samples", end + (len(rest) - len(rest.lstrip())))
    return np.array([v for v, _ in vals], dtype=np.uint8).reshape(h, w)


def read_image(path):
    """Read a graymap (P5 or P2) and its sidecar.

    Without a sidecar the grid spans the unit square with a linear 0..1 map.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        levels = parse_pgm(fh.read())
    meta = {}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side) as fh:
            try:
                meta = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad metadata sidecar: {exc.msg}", exc.pos) from None
    try:
        return RasterField(
            levels,
            origin=(meta.get("origin_x", 0.0), meta.get("origin_y", 0.0)),
            extent=(meta.get("extent_x", 1.0), meta.get("extent_y", 1.0)),
            mode=meta.get("mode", "linear"),
            i_min=meta.get("i_min", 0.0), i_max=meta.get("i_max", 1.0),
            floor=meta.get("floor", fields.DEFAULT_FLOOR))
    except (TypeError, ValueError, ConfigError) as exc:
        raise ParseError(f"bad metadata sidecar: {exc}", None) from None


# ------------------------------------------------------------ reconstruction

@fields._register
class RasterExpr(fields.Expr):
    """Bilinear interpolant of node intensities; gradient is exact per cell.

    Points beyond the grid take the value of the nearest edge.  On cell
    edges the gradient of the cell to the lower-left is used.
    """

    kind = "raster"

    def __init__(self, raster):
        self.raster = raster
        self._grid = raster.intensities()[::-1].copy()  # row 0 = bottom
        self._grid.setflags(write=False)
        self._freeze()

    def _locate(self, x, y):
        r = self.raster
        hx, hy = r.spacing
        u = (np.asarray(x, float) - r.origin[0]) / hx
        v = (np.asarray(y, float) - r.origin[1]) / hy
        u = np.clip(u, 0.0, r.width - 1)
        v = np.clip(v, 0.0, r.height - 1)
        j = np.minimum(np.floor(u).astype(int), r.width - 2)
        i = np.minimum(np.floor(v).astype(int), r.height - 2)
        return i, j, u - j, v - i

    def _corners(self, i, j):
        g = self._grid
        return g[i, j], g[i, j + 1], g[i + 1, j], g[i + 1, j + 1]

    def value(self, x, y):
        i, j, fu, fv = self._locate(x, y)
        f00, f10, f01, f11 = self._corners(i, j)
        return ((1 - fv) * ((1 - fu) * f00 + fu * f10) + fv * ((1 - fu) * f01 + fu * f11))[()]

    def value_and_grad(self, x, y):
        r = self.raster
        hx, hy = r.spacing
        i, j, fu, fv = self._locate(x, y)
        f00, f10, f01, f11 = self._corners(i, j)
        val = (1 - fv) * ((1 - fu) * f00 + fu * f10) + fv * ((1 - fu) * f01 + fu * f11)
        gx = ((1 - fv) * (f10 - f00) + fv * (f11 - f01)) / hx
        gy = ((1 - fu) * (f01 - f00) + fu * (f11 - f10)) / hy
        # flat extension outside the grid
        xa, ya = np.asarray(x, float), np.asarray(y, float)
        gx = np.where((xa < r.origin[0]) | (xa > r.origin[0] + r.extent[0]), 0.0, gx)
        gy = np.where((ya < r.origin[1]) | (ya > r.origin[1] + r.extent[1]), 0.0, gy)
        return val[()], (gx[()], gy[()])

    def grad(self, x, y):
        return self.value_and_grad(x, y)[1]

    def to_dict(self):
        return {"kind": self.kind, "levels": self.raster.levels.tolist(),
                **self.raster.metadata()}

    @classmethod
    def from_dict(cls, d, context=None):
        return cls(RasterField(np.array(d["levels"]),
                               origin=(d.get("origin_x", 0.0), d.get("origin_y", 0.0)),
                               extent=(d.get("extent_x", 1.0), d.get("extent_y", 1.0)),
                               mode=d.get("mode", "linear"), i_min=d.get("i_min", 0.0),
                               i_max=d.get("i_max", 1.0),
                               floor=d.get("floor", fields.DEFAULT_FLOOR)))


def field_from_raster(r):
    """Bilinear :class:`~artspace.fields.ScalarField` over the raster extent."""
    ox, oy = r.origin
    ex, ey = r.extent
    return fields.ScalarField(RasterExpr(r), domain=Rect(ox, ox + ex, oy, oy + ey),
                              floor=r.floor)


__all__ = [
    "RasterExpr", "RasterField", "field_from_raster", "intensity_to_level",
    "level_to_intensity", "parse_pgm", "rasterize", "read_image", "write_image",
]
