"""Scenario geometry: wall deformations and scatterers inside the strip.

Polylines are ``(n, 2)`` arrays of ``(range, cross_range)`` vertices. A
deformation is either a closed polygon touching the walls or an open chain
whose two end points lie on the walls; in the latter case the deformed
region ``D`` is the smaller of the two pieces the chain cuts off the strip.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from shapely.geometry import LineString, Polygon, box
from shapely.ops import unary_union

from .errors import GeometryError
from .modes import WaveguideSpec

_TOL = 1e-9


def _polyline(a, closed=False):
    a = np.array(a, dtype=float).reshape(-1, 2)
    if closed and len(a) > 1 and np.allclose(a[0], a[-1]):
        a = a[:-1]
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SoundSoft:
    boundary: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "boundary", _polyline(self.boundary, closed=True))

    kind = "soft"


@dataclass(frozen=True, eq=False)
class SoundHard:
    boundary: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "boundary", _polyline(self.boundary, closed=True))

    kind = "hard"


@dataclass(frozen=True, eq=False)
class Penetrable:
    region: np.ndarray
    n2: complex

    def __post_init__(self):
        object.__setattr__(self, "region", _polyline(self.region, closed=True))
        object.__setattr__(self, "n2", complex(self.n2))
        if not (self.n2.real > 0 and self.n2.imag >= 0):
            raise GeometryError(f"n^2 needs Re > 0 and Im >= 0, got {self.n2}")

    kind = "penetrable"

    @property
    def boundary(self):
        return self.region


Scatterer = Union[SoundSoft, SoundHard, Penetrable]


def bump_polyline(center, length, depth, wall="bottom", width=1.0, n_seg=24):
    """Smooth wall-anchored bump with a raised-cosine profile."""
    s = np.linspace(-0.5, 0.5, n_seg + 1)
    x = center + s * length
    h = depth * 0.5 * (1.0 + np.cos(2.0 * np.pi * s))
    if wall == "bottom":
        y = h
    elif wall == "top":
        y = width - h
    else:
        raise GeometryError(f"wall must be 'bottom' or 'top', got {wall!r}")
    y[0] = y[-1] = 0.0 if wall == "bottom" else width
    return np.column_stack([x, y])


def disk_polygon(center, radius, n_seg=None, h=None):
    """Regular polygon approximating a disk; ``h`` picks the edge count."""
    if n_seg is None:
        n_seg = 32 if h is None else max(16, int(math.ceil(2 * math.pi * radius / h)))
    t = 2 * np.pi * np.arange(n_seg) / n_seg
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def _on_strip_boundary(p, x_L, width):
    x, y = p
    return (abs(y) < _TOL or abs(y - width) < _TOL or abs(x) < _TOL or abs(x - x_L) < _TOL)


def _perimeter_param(p, x_L, width):
    """Counter-clockwise arc-length position of a boundary point of the strip box."""
    L = -x_L
    x, y = p
    if abs(y) < _TOL:
        return x - x_L
    if abs(x) < _TOL:
        return L + y
    if abs(y - width) < _TOL:
        return L + width + (0.0 - x)
    return 2 * L + width + (width - y)


def _box_corners(x_L, width):
    L = -x_L
    return [(0.0, (x_L, 0.0)), (L, (0.0, 0.0)), (L + width, (0.0, width)),
            (2 * L + width, (x_L, width))]


def _arc(s0, s1, x_L, width):
    """Box corners met walking counter-clockwise from ``s0`` to ``s1``."""
    P = 2 * (-x_L + width)
    span = (s1 - s0) % P
    out = []
    for s, c in _box_corners(x_L, width):
        d = (s - s0) % P
        if 0 < d < span:
            out.append((d, c))
    return [c for _, c in sorted(out)]


def _region_from_chain(chain, x_L, width):
    p0, p1 = chain[0], chain[-1]
    s0 = _perimeter_param(p0, x_L, width)
    s1 = _perimeter_param(p1, x_L, width)
    ring = [tuple(v) for v in chain]
    best = None
    for corners in (_arc(s1, s0, x_L, width), _arc(s0, s1, x_L, width)[::-1]):
        poly = Polygon(ring + corners)
        if not poly.is_valid or poly.area <= 0:
            continue
        if best is None or poly.area < best.area:
            best = poly
    if best is None:
        raise GeometryError("wall-anchored chain does not enclose a valid region")
    return best


@dataclass(frozen=True, eq=False)
class ScenarioGeometry:
    """Deformations, scatterer and the range bounds of a scenario.

    ``x_star`` bounds the support of all perturbations from below and
    ``x_L`` is the truncation range of the computational box.
    """

    spec: WaveguideSpec
    deformation: Tuple[np.ndarray, ...] = ()
    scatterer: Optional[Scatterer] = None
    x_star: float = -2.0
    x_L: float = -6.0
    closed: Tuple[bool, ...] = field(default=())

    def __post_init__(self):
        chains = tuple(_polyline(c) for c in self.deformation)
        object.__setattr__(self, "deformation", chains)
        closed = tuple(self.closed) if self.closed else tuple(
            len(c) > 2 and np.allclose(c[0], c[-1]) for c in chains)
        if len(closed) != len(chains):
            raise GeometryError("closed flags must match the deformation list")
        object.__setattr__(self, "closed", closed)
        self._validate()

    @property
    def width(self):
        return self.spec.width

    @property
    def is_empty(self):
        return not self.deformation and self.scatterer is None

    def _validate(self):
        w = self.width
        if not self.x_L < self.x_star < 0:
            raise GeometryError(f"need x_L < x_star < 0, got x_L={self.x_L}, x_star={self.x_star}")
        for c, is_closed in zip(self.deformation, self.closed):
            if len(c) < 2:
                raise GeometryError("deformation polyline needs at least two vertices")
            if (np.any(c[:, 0] < self.x_star - _TOL) or np.any(c[:, 0] > _TOL)
                    or np.any(c[:, 1] < -_TOL) or np.any(c[:, 1] > w + _TOL)):
                raise GeometryError("deformation leaves the strip (x_star, 0) x (0, width)")
            line = LineString(c)
            if not is_closed:
                if not line.is_simple:
                    raise GeometryError("deformation polyline self-intersects")
                for p in (c[0], c[-1]):
                    if not _on_strip_boundary(p, self.x_L, w):
                        raise GeometryError("open deformation chains must start and end on a wall")
        regions = self.deformation_regions()
        for r in regions:
            if not r.is_valid:
                raise GeometryError("deformation region is not a valid polygon")
        if self.scatterer is not None:
            s = self.scatterer.boundary
            poly = Polygon(s)
            if not poly.is_valid or poly.area <= 0:
                raise GeometryError("scatterer boundary is not a simple polygon")
            inner = box(self.x_star, 0.0, 0.0, w)
            if not inner.contains(poly) or poly.distance(inner.exterior) <= _TOL:
                raise GeometryError("scatterer must lie strictly inside (x_star, 0) x (0, width)")
            if regions and poly.distance(unary_union(regions)) <= _TOL:
                raise GeometryError("scatterer touches a deformation")

    def deformation_regions(self):
        """Deformed regions ``D`` as shapely polygons."""
        out = []
        for c, is_closed in zip(self.deformation, self.closed):
            if is_closed:
                pts = c[:-1] if np.allclose(c[0], c[-1]) else c
                out.append(Polygon(pts))
            else:
                out.append(_region_from_chain(c, self.x_L, self.width))
        return out

    def fluid_polygon(self):
        """The truncated fluid domain; impenetrable scatterers are holes."""
        dom = box(self.x_L, 0.0, 0.0, self.width)
        regions = self.deformation_regions()
        if regions:
            dom = dom.difference(unary_union(regions))
        if self.scatterer is not None and not isinstance(self.scatterer, Penetrable):
            dom = dom.difference(Polygon(self.scatterer.boundary))
        if dom.geom_type != "Polygon":
            raise GeometryError("the fluid domain must be connected")
        return dom

    def support_min_range(self):
        """Smallest range reached by any deformation or scatterer vertex."""
        xs = [c[:, 0].min() for c in self.deformation]
        if self.scatterer is not None:
            xs.append(self.scatterer.boundary[:, 0].min())
        return min(xs) if xs else 0.0

    def support_centroid(self):
        """Centroids of the deformed regions and the scatterer."""
        out = [np.array(r.centroid.coords[0]) for r in self.deformation_regions()]
        if self.scatterer is not None:
            out.append(np.array(Polygon(self.scatterer.boundary).centroid.coords[0]))
        return out

    def support_polygons(self):
        polys = list(self.deformation_regions())
        if self.scatterer is not None:
            polys.append(Polygon(self.scatterer.boundary))
        return polys
