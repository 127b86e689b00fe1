"""Triangular meshes of the truncated fluid domain.

The built-in mesher places a hexagonal lattice of spacing ``~h`` in the
interior, resolves every boundary ring (and the interface of a penetrable
scatterer) with vertices at spacing ``<= h``, and builds a conforming
Delaunay triangulation: constraint segments missing from the triangulation
are split at their midpoints until all of them are edges. Triangles are
then kept by centroid inclusion and long edges are bisected until the
maximum edge length is below the target.
"""

import logging
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import shapely
from scipy.spatial import Delaunay
from shapely.geometry import MultiLineString, Polygon

from .errors import GeometryError, MeshGeometryMismatch
from .geometry import Penetrable

logger = logging.getLogger(__name__)


class BoundaryTag(IntEnum):
    WALL = 0
    GAMMA = 1
    SCATTERER = 2
    TRUNCATION = 3


class RegionTag(IntEnum):
    FLUID = 0
    INTERIOR = 1


_BOUNDARY_NAMES = {BoundaryTag.WALL: "Wall", BoundaryTag.GAMMA: "Gamma",
                   BoundaryTag.SCATTERER: "ScattererBoundary",
                   BoundaryTag.TRUNCATION: "Truncation"}
_REGION_NAMES = {RegionTag.FLUID: "Fluid", RegionTag.INTERIOR: "ScattererInterior"}


def _ro(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 mesh with tagged boundary edges and regions.

    Attributes
    ----------
    vertices : ndarray, shape (n, 2)
    triangles : ndarray of int, shape (nt, 3)
        Counter-clockwise vertex triples.
    edges : ndarray of int, shape (ne, 2)
        Boundary edges.
    edge_tags : ndarray of int8, shape (ne,)
        :class:`BoundaryTag` per boundary edge.
    region_tags : ndarray of int8, shape (nt,)
        :class:`RegionTag` per triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tags: np.ndarray
    region_tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _ro(self.vertices, np.float64))
        object.__setattr__(self, "triangles", _ro(self.triangles, np.int64))
        object.__setattr__(self, "edges", _ro(self.edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "edge_tags", _ro(self.edge_tags, np.int8))
        object.__setattr__(self, "region_tags", _ro(self.region_tags, np.int8))

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def areas(self):
        x = self.vertices[self.triangles]
        return 0.5 * ((x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1])
                      - (x[:, 2, 0] - x[:, 0, 0]) * (x[:, 1, 1] - x[:, 0, 1]))

    def edge_lengths(self):
        e = _all_edges(self.triangles)
        d = self.vertices[e[:, 0]] - self.vertices[e[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    def tagged_edges(self, tag):
        return self.edges[self.edge_tags == int(tag)]

    def tagged_nodes(self, tag):
        return np.unique(self.tagged_edges(tag))

    def validate(self, width=1.0):
        """Check orientation, area and edge tagging; raise on failure."""
        a = self.areas()
        if np.any(a <= 1e-14 * width ** 2):
            raise MeshGeometryMismatch("degenerate or clockwise triangle in mesh")
        bnd = _boundary_edges(self.triangles)
        if len(bnd) != len(self.edges):
            raise MeshGeometryMismatch("every boundary edge needs exactly one tag")
        key = lambda e: np.sort(e, axis=1) @ np.array([self.n_vertices, 1])
        if not np.array_equal(np.sort(key(bnd)), np.sort(key(self.edges))):
            raise MeshGeometryMismatch("tagged edges do not match the mesh boundary")


def _all_edges(tris):
    e = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    n = int(e.max()) + 1 if len(e) else 1
    _, idx = np.unique(e[:, 0] * n + e[:, 1], return_index=True)
    return e[idx]


def _boundary_edges(tris):
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    s = np.sort(e, axis=1)
    n = int(s.max()) + 1 if len(s) else 1
    _, idx, cnt = np.unique(s[:, 0] * n + s[:, 1], return_index=True, return_counts=True)
    return e[idx[cnt == 1]]


# ---------------------------------------------------------------------------
# Mesh generation
# ---------------------------------------------------------------------------
def _rings(poly):
    return [np.asarray(poly.exterior.coords)[:-1]] + [
        np.asarray(r.coords)[:-1] for r in poly.interiors]


def _subdivide_ring(ring, h):
    """Vertices and closed segment list of a ring resolved at spacing <= h."""
    pts = []
    for i in range(len(ring)):
        a, b = ring[i], ring[(i + 1) % len(ring)]
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / h - 1e-9)))
        t = np.arange(n)[:, None] / n
        pts.append(a + t * (b - a))
    pts = np.concatenate(pts)
    m = len(pts)
    segs = np.column_stack([np.arange(m), (np.arange(m) + 1) % m])
    return pts, segs


def _hex_lattice(xmin, xmax, width, s):
    ny = max(1, int(math.ceil(width / (s * math.sqrt(3) / 2))))
    dy = width / ny
    rows = []
    for r in range(ny + 1):
        off = 0.5 * s * (r % 2)
        xs = np.arange(xmin + off, xmax + 0.5 * s, s)
        rows.append(np.column_stack([xs, np.full(xs.shape, r * dy)]))
    return np.concatenate(rows)


def _delaunay(points):
    return Delaunay(points).simplices.astype(np.int64)


def _edge_keys(e, n):
    e = np.sort(e, axis=1)
    return e[:, 0] * n + e[:, 1]


def _triangulate_conforming(points, segs, n_fixed, max_rounds=60):
    """Delaunay triangulation in which every segment appears as an edge.

    ``points[:n_fixed]`` are constraint vertices; the rest are free lattice
    points that may be deleted when they encroach a segment.
    """
    points = np.asarray(points, dtype=float)
    segs = np.asarray(segs, dtype=np.int64)
    free_alive = np.ones(len(points), dtype=bool)
    for _ in range(max_rounds):
        tris = _delaunay(points)
        n = len(points)
        have = _edge_keys(_all_edges(tris), n)
        missing = ~np.isin(_edge_keys(segs, n), have)
        if not missing.any():
            return points, segs, tris
        bad = segs[missing]
        mids = 0.5 * (points[bad[:, 0]] + points[bad[:, 1]])
        radius = 0.5 * np.hypot(*(points[bad[:, 0]] - points[bad[:, 1]]).T)
        # delete free points inside the diametral circles of missing segments
        free_idx = np.arange(n_fixed, n)
        if len(free_idx):
            fp = points[free_idx]
            kill = np.zeros(len(free_idx), dtype=bool)
            for c, r in zip(mids, radius):
                kill |= np.hypot(fp[:, 0] - c[0], fp[:, 1] - c[1]) < r * (1 + 1e-9)
            keep_free = free_idx[~kill]
        else:
            keep_free = free_idx
        new_ids = np.arange(n_fixed, n_fixed + len(mids))
        good = segs[~missing]
        split = np.concatenate([np.column_stack([bad[:, 0], new_ids]),
                                np.column_stack([new_ids, bad[:, 1]])])
        fixed = np.concatenate([points[:n_fixed], mids])
        n_fixed += len(mids)
        points = np.concatenate([fixed, points[keep_free]])
        segs = np.concatenate([good, split])
    raise GeometryError("could not recover all boundary segments; check polylines")


def _classify_edges(verts, edges, geometry):
    w = geometry.width
    tol = 1e-9 * max(1.0, w)
    a, b = verts[edges[:, 0]], verts[edges[:, 1]]
    mid = 0.5 * (a + b)
    tags = np.full(len(edges), int(BoundaryTag.GAMMA), dtype=np.int8)
    on_bot = (np.abs(a[:, 1]) < tol) & (np.abs(b[:, 1]) < tol)
    on_top = (np.abs(a[:, 1] - w) < tol) & (np.abs(b[:, 1] - w) < tol)
    on_end = (np.abs(a[:, 0]) < tol) & (np.abs(b[:, 0]) < tol)
    on_trunc = (np.abs(a[:, 0] - geometry.x_L) < tol) & (np.abs(b[:, 0] - geometry.x_L) < tol)
    tags[on_bot | on_top | on_end] = int(BoundaryTag.WALL)
    tags[on_trunc] = int(BoundaryTag.TRUNCATION)
    rest = ~(on_bot | on_top | on_end | on_trunc)
    sc = geometry.scatterer
    if sc is not None and not isinstance(sc, Penetrable):
        ring = Polygon(sc.boundary).exterior
        d = shapely.distance(shapely.points(mid[rest]), ring)
        idx = np.nonzero(rest)[0][d < 1e-7 * max(1.0, w)]
        tags[idx] = int(BoundaryTag.SCATTERER)
        rest[idx] = False
    if rest.any():
        if not geometry.deformation:
            raise MeshGeometryMismatch("boundary edge off the walls in a geometry without Gamma")
        lines = MultiLineString([r.exterior for r in geometry.deformation_regions()])
        d = shapely.distance(shapely.points(mid[rest]), lines)
        if np.any(d > 1e-7 * max(1.0, w)):
            raise MeshGeometryMismatch("boundary edge matches no wall, Gamma or scatterer")
    return tags


def build_mesh(geometry, h_target, max_refine=30):
    """Mesh the truncated fluid domain of ``geometry`` with edges <= ``h_target``.

    Raises
    ------
    GeometryError
        If the domain cannot be meshed (invalid or disconnected geometry).
    """
    if not h_target > 0:
        raise GeometryError("h_target must be positive")
    w = geometry.width
    dom = geometry.fluid_polygon()
    s = 0.95 * h_target
    hb = 0.9 * h_target
    constraint_pts = []
    constraint_segs = []
    offset = 0
    rings = _rings(dom)
    interface = None
    if isinstance(geometry.scatterer, Penetrable):
        interface = np.asarray(geometry.scatterer.region, dtype=float)
        rings.append(interface)
    for ring in rings:
        p, sg = _subdivide_ring(ring, hb)
        constraint_pts.append(p)
        constraint_segs.append(sg + offset)
        offset += len(p)
    cpts = np.concatenate(constraint_pts)
    csegs = np.concatenate(constraint_segs)
    cpts, inv = _dedupe(cpts, 1e-12 * max(1.0, w))
    csegs = inv[csegs]
    csegs = csegs[csegs[:, 0] != csegs[:, 1]]

    lat = _hex_lattice(geometry.x_L, 0.0, w, s)
    inside = shapely.contains_xy(dom, lat[:, 0], lat[:, 1])
    lat = lat[inside]
    lines = MultiLineString([np.vstack([r, r[:1]]) for r in rings])
    far = shapely.distance(shapely.points(lat), lines) > 0.5 * s
    lat = lat[far]

    points = np.concatenate([cpts, lat])
    n_fixed = len(cpts)
    for it in range(max_refine):
        points, csegs, tris = _triangulate_conforming(points, csegs, n_fixed)
        n_fixed = int(csegs.max()) + 1 if len(csegs) else n_fixed
        n_fixed = max(n_fixed, len(cpts))
        cen = points[tris].mean(axis=1)
        keep = shapely.contains_xy(dom, cen[:, 0], cen[:, 1])
        tris = tris[keep]
        x = points[tris]
        el = np.stack([np.hypot(*(x[:, 1] - x[:, 0]).T), np.hypot(*(x[:, 2] - x[:, 1]).T),
                       np.hypot(*(x[:, 0] - x[:, 2]).T)], axis=1)
        long_tri = el.max(axis=1) > h_target
        logger.debug("refine pass %d: %d points, %d long triangles", it, len(points),
                     long_tri.sum())
        if not long_tri.any():
            break
        # bisect the longest edge of offending triangles; constraint edges split in place
        which = el[long_tri].argmax(axis=1)
        t = tris[long_tri]
        ea = t[np.arange(len(t)), which]
        eb = t[np.arange(len(t)), (which + 1) % 3]
        e = np.unique(np.sort(np.column_stack([ea, eb]), axis=1), axis=0)
        seg_keys = _edge_keys(csegs, len(points))
        is_seg = np.isin(_edge_keys(e, len(points)), seg_keys)
        mids_free = 0.5 * (points[e[~is_seg, 0]] + points[e[~is_seg, 1]])
        se = e[is_seg]
        if len(se):
            keep_seg = ~np.isin(seg_keys, _edge_keys(se, len(points)))
            new_ids = np.arange(n_fixed, n_fixed + len(se))
            mids_seg = 0.5 * (points[se[:, 0]] + points[se[:, 1]])
            free = points[n_fixed:]
            points = np.concatenate([points[:n_fixed], mids_seg, free])
            shift = lambda a: np.where(a >= n_fixed, a + len(se), a)
            csegs = np.concatenate([shift(csegs[keep_seg]),
                                    np.column_stack([se[:, 0], new_ids]),
                                    np.column_stack([new_ids, se[:, 1]])])
            n_fixed += len(se)
        points = np.concatenate([points, mids_free])
    else:
        raise GeometryError("mesh refinement did not reach the target edge length")

    verts, tris = _compact(points, tris)
    a = verts[tris]
    area = 0.5 * ((a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1])
                  - (a[:, 2, 0] - a[:, 0, 0]) * (a[:, 1, 1] - a[:, 0, 1]))
    tris[area < 0] = tris[area < 0][:, [0, 2, 1]]
    edges = _boundary_edges(tris)
    tags = _classify_edges(verts, edges, geometry)
    region = np.zeros(len(tris), dtype=np.int8)
    if interface is not None:
        cen = verts[tris].mean(axis=1)
        region[shapely.contains_xy(Polygon(interface), cen[:, 0], cen[:, 1])] = int(
            RegionTag.INTERIOR)
    mesh = Mesh(verts, tris, edges, tags, region)
    mesh.validate(w)
    logger.info("mesh: %d vertices, %d triangles, h_max=%.4g", mesh.n_vertices,
                mesh.n_triangles, mesh.edge_lengths().max())
    return mesh


def _dedupe(pts, tol):
    key = np.round(pts / tol).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return pts[first[order]], rank[inv.ravel()]


def _compact(points, tris):
    used = np.unique(tris)
    remap = np.full(len(points), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return points[used].copy(), remap[tris]


# ---------------------------------------------------------------------------
# Mesh file format
# ---------------------------------------------------------------------------
def write_mesh(mesh, path):
    """Write the VERTICES / TRIANGLES / EDGES text format."""
    lines = ["# wglsm mesh", "VERTICES"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    lines.append("TRIANGLES")
    lines += [f"{a} {b} {c} {_REGION_NAMES[RegionTag(r)]}"
              for (a, b, c), r in zip(mesh.triangles.tolist(), mesh.region_tags.tolist())]
    lines.append("EDGES")
    lines += [f"{a} {b} {_BOUNDARY_NAMES[BoundaryTag(t)]}"
              for (a, b), t in zip(mesh.edges.tolist(), mesh.edge_tags.tolist())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read a mesh written by :func:`write_mesh` or an external tool."""
    btag = {v: k for k, v in _BOUNDARY_NAMES.items()}
    rtag = {v: k for k, v in _REGION_NAMES.items()}
    section = None
    verts, index, tris, regions, edges, etags = [], {}, [], [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line in ("VERTICES", "TRIANGLES", "EDGES"):
                section = line
                continue
            tok = line.split()
            try:
                if section == "VERTICES":
                    index[int(tok[0])] = len(verts)
                    verts.append((float(tok[1]), float(tok[2])))
                elif section == "TRIANGLES":
                    tris.append([int(t) for t in tok[:3]])
                    regions.append(rtag[tok[3]] if len(tok) > 3 else RegionTag.FLUID)
                elif section == "EDGES":
                    edges.append([int(t) for t in tok[:2]])
                    etags.append(btag[tok[2]])
                else:
                    raise ValueError("data before any section header")
            except (ValueError, IndexError, KeyError) as exc:
                raise MeshGeometryMismatch(f"{path}:{lineno}: {exc}") from None
    remap = np.vectorize(index.__getitem__, otypes=[np.int64])
    tris = remap(np.array(tris, dtype=np.int64)) if tris else np.zeros((0, 3), np.int64)
    edges = remap(np.array(edges, dtype=np.int64)) if edges else np.zeros((0, 2), np.int64)
    return Mesh(np.array(verts), tris, edges, np.array(etags, dtype=np.int8),
                np.array(regions, dtype=np.int8))
