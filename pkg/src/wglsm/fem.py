"""P1 finite elements for the scattered field on the truncated waveguide.

The scattered field ``u`` solves the Helmholtz equation in the fluid part of
``(x_L, 0) x (0, width)`` with boundary data taken from the analytic Green's
function of the unperturbed guide, so the source singularity is never
meshed. At the truncation range the exact modal Dirichlet-to-Neumann map is
imposed through a dense block coupling only the truncation nodes.

The mass matrix is a blend of the consistent and the row-lumped P1 mass
(``mass_blend`` is the lumped weight). A half-and-half blend cancels the
leading phase error of linear elements and cuts the pollution error on
multi-wavelength domains by roughly an order of magnitude.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import CrossSectionOutsideDomain, MeshGeometryMismatch, SingularSystem
from .geometry import Penetrable, ScenarioGeometry, SoundHard, SoundSoft
from .mesh import BoundaryTag, Mesh, RegionTag, build_mesh
from .modes import ModalCoefficients, dtn_factors

logger = logging.getLogger(__name__)

DEFAULT_MASS_BLEND = 0.5
RESIDUAL_TOL = 1e-8

# Gauss-Legendre nodes on [0, 1]
_G3_T, _G3_W = np.polynomial.legendre.leggauss(3)
_G3_T, _G3_W = 0.5 * (_G3_T + 1), 0.5 * _G3_W
_G8_T, _G8_W = np.polynomial.legendre.leggauss(8)
_G8_T, _G8_W = 0.5 * (_G8_T + 1), 0.5 * _G8_W

# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
_T7_BARY = np.array([[1 / 3, 1 / 3, 1 / 3],
                     [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
                     [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2]])
_T7_W = np.array([0.225, *[0.132394152788506] * 3, *[0.125939180544827] * 3])


@dataclass(frozen=True, eq=False)
class FieldSolution:
    """Nodal scattered field for one source.

    Attributes
    ----------
    mesh : Mesh
    values : ndarray of complex, shape (n_vertices,)
    source : ndarray, shape (2,)
    residual : float
        Relative residual ``|Ax - b| / |b|`` of the linear solve.
    """

    mesh: Mesh
    values: np.ndarray
    source: np.ndarray
    residual: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.mesh.n_vertices,):
            raise MeshGeometryMismatch("field values do not match the mesh")
        if not np.all(np.isfinite(v)):
            raise SingularSystem("non-finite values in the field")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float).reshape(2))

    def at(self, points):
        """P1 interpolation of the field at ``points``."""
        return interpolation_matrix(self.mesh, points) @ self.values


# ---------------------------------------------------------------------------
# Assembly helpers
# ---------------------------------------------------------------------------
def _element_mass(area, blend):
    cons = (np.ones((3, 3)) + np.eye(3)) / 12.0
    lump = np.eye(3) / 3.0
    return area[:, None, None] * ((1.0 - blend) * cons + blend * lump)


def _scatter(tris, local, n):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_and_mass(mesh, n2_per_tri=None, mass_blend=DEFAULT_MASS_BLEND):
    """Global stiffness and (index-weighted) blended mass matrices."""
    stiff, area = kernels.p1_stiffness(mesh.vertices, mesh.triangles)
    if np.any(area <= 0):
        raise MeshGeometryMismatch("mesh has clockwise or degenerate triangles")
    mloc = _element_mass(area, mass_blend)
    if n2_per_tri is not None:
        mloc = mloc * np.asarray(n2_per_tri)[:, None, None]
    n = mesh.n_vertices
    return _scatter(mesh.triangles, stiff, n), _scatter(mesh.triangles, mloc, n)


def _edge_quadrature(verts, edges, t, w):
    a, b = verts[edges[:, 0]], verts[edges[:, 1]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    pts = a[:, None, :] + t[None, :, None] * d[:, None, :]  # (ne, nq, 2)
    return pts, length[:, None] * w[None, :], length


def truncation_projection(mesh, basis, x_L):
    """``P[q, a] = integral of psi_q phi_a`` over the truncation edges.

    Returns the node indices touched and the dense ``(n_total, n_nodes)``
    projection of their hat functions.
    """
    edges = mesh.tagged_edges(BoundaryTag.TRUNCATION)
    if len(edges) == 0:
        raise MeshGeometryMismatch("mesh has no truncation edges")
    if np.any(np.abs(mesh.vertices[edges.ravel(), 0] - x_L) > 1e-9 * max(1.0, abs(x_L))):
        raise MeshGeometryMismatch(f"truncation edges are not all at range {x_L}")
    nodes, local = np.unique(edges, return_inverse=True)
    local = local.reshape(-1, 2)
    pts, wq, _ = _edge_quadrature(mesh.vertices, edges, _G8_T, _G8_W)
    psi = basis.psi(pts[..., 1].ravel()).reshape(basis.n_total, *pts.shape[:2])
    P = np.zeros((basis.n_total, len(nodes)), dtype=float)
    for side, phi in ((0, 1.0 - _G8_T), (1, _G8_T)):
        contrib = (psi * (wq * phi[None, :])[None]).sum(axis=2)  # (nq_modes, ne)
        for q in range(basis.n_total):
            np.add.at(P[q], local[:, side], contrib[q])
    return nodes, P


def dtn_block(mesh, basis, x_L):
    """Dense DtN coupling ``P^T diag(i beta) P`` on the truncation nodes."""
    nodes, P = truncation_projection(mesh, basis, x_L)
    lam = dtn_factors(basis.lambdas, basis.wavenumber ** 2)
    return nodes, (P.T * lam) @ P


def _outward_normals(verts, tris, edges):
    """Unit normals of boundary edges pointing out of the meshed domain."""
    a, b = verts[edges[:, 0]], verts[edges[:, 1]]
    d = b - a
    nrm = np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
    # third vertex of the owning triangle decides the orientation
    n = len(verts)
    te = np.concatenate([tris[:, [0, 1, 2]], tris[:, [1, 2, 0]], tris[:, [2, 0, 1]]])
    tkey = np.minimum(te[:, 0], te[:, 1]) * n + np.maximum(te[:, 0], te[:, 1])
    order = np.argsort(tkey)
    ekey = edges.min(axis=1) * n + edges.max(axis=1)
    pos = order[np.searchsorted(tkey[order], ekey)]
    third = te[pos, 2]
    flip = ((verts[third] - a) * nrm).sum(axis=1) > 0
    nrm[flip] *= -1
    return nrm


def gauss_triangle_points(mesh, tri_idx):
    x = mesh.vertices[mesh.triangles[tri_idx]]  # (nt, 3, 2)
    return np.einsum("qi,tid->tqd", _T7_BARY, x)


# ---------------------------------------------------------------------------
# Problem setup and solve
# ---------------------------------------------------------------------------
class HelmholtzProblem:
    """Factor the truncated scattering operator once and reuse it per source.

    Parameters
    ----------
    geometry : ScenarioGeometry
    basis : ModeBasis
        Used for the DtN map and for the Green's function boundary data.
    mesh : Mesh
        Mesh built from ``geometry``.
    mass_blend : float
        Lumped-mass weight of the blended mass matrix.
    """

    def __init__(self, geometry, basis, mesh, mass_blend=DEFAULT_MASS_BLEND):
        if abs(geometry.width - basis.width) > 1e-12 * basis.width:
            raise MeshGeometryMismatch("basis and geometry disagree on the width")
        self.geometry = geometry
        self.basis = basis
        self.mesh = mesh
        self.mass_blend = float(mass_blend)
        self._lock = threading.Lock()
        self._setup()

    def _setup(self):
        g, mesh, basis = self.geometry, self.mesh, self.basis
        k2 = basis.wavenumber ** 2
        verts, tris = mesh.vertices, mesh.triangles
        n = mesh.n_vertices
        sc = g.scatterer
        n2 = None
        self._interior = np.zeros(0, dtype=np.int64)
        if isinstance(sc, Penetrable):
            self._interior = np.nonzero(mesh.region_tags == int(RegionTag.INTERIOR))[0]
            if len(self._interior) == 0:
                raise MeshGeometryMismatch("penetrable scatterer but no interior triangles")
            n2 = np.ones(mesh.n_triangles, dtype=complex)
            n2[self._interior] = sc.n2
        elif np.any(mesh.region_tags != int(RegionTag.FLUID)):
            raise MeshGeometryMismatch("region-tagged triangles without a penetrable scatterer")
        K, M = stiffness_and_mass(mesh, n2, self.mass_blend)
        nodes, D = dtn_block(mesh, basis, g.x_L)
        r, c = np.meshgrid(nodes, nodes, indexing="ij")
        Dg = sp.coo_matrix((D.ravel(), (r.ravel(), c.ravel())), shape=(n, n)).tocsr()
        A = (K - k2 * M - Dg).tocsr()

        neumann = [BoundaryTag.GAMMA]
        self._dirichlet = np.zeros(0, dtype=np.int64)
        sc_edges = mesh.tagged_edges(BoundaryTag.SCATTERER)
        if isinstance(sc, SoundSoft):
            self._dirichlet = np.unique(sc_edges)
        elif isinstance(sc, SoundHard):
            neumann.append(BoundaryTag.SCATTERER)
        if len(sc_edges) and not isinstance(sc, (SoundSoft, SoundHard)):
            raise MeshGeometryMismatch("scatterer edges in the mesh but no impenetrable scatterer")
        if isinstance(sc, (SoundSoft, SoundHard)) and len(sc_edges) == 0:
            raise MeshGeometryMismatch("scatterer given but the mesh has no scatterer edges")
        if g.deformation and len(mesh.tagged_edges(BoundaryTag.GAMMA)) == 0:
            raise MeshGeometryMismatch("geometry has a deformation but the mesh has no Gamma edges")

        ne = np.concatenate([mesh.tagged_edges(t) for t in neumann])
        self._neu_edges = ne
        if len(ne):
            self._neu_pts, self._neu_w, _ = _edge_quadrature(verts, ne, _G3_T, _G3_W)
            self._neu_nrm = _outward_normals(verts, tris, ne)
        if len(self._interior):
            self._vol_pts = gauss_triangle_points(mesh, self._interior)
            area = mesh.areas()[self._interior]
            self._vol_w = area[:, None] * _T7_W[None, :]
            self._vol_coef = k2 * (sc.n2 - 1.0)

        free = np.ones(n, dtype=bool)
        free[self._dirichlet] = False
        self._free = np.nonzero(free)[0]
        self._A = A
        self._A_ff = A[self._free][:, self._free].tocsc()
        self._A_fd = A[self._free][:, self._dirichlet].tocsr()
        self._lu = None

    @property
    def n_dofs(self):
        return len(self._free)

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self._A_ff, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularSystem(f"sparse factorization failed: {exc}") from None
        return self._lu

    def release(self):
        """Drop the factorization to free memory."""
        self._lu = None

    def _check_source(self, source):
        s = np.asarray(source, dtype=float).reshape(2)
        if not (self.geometry.x_L < s[0] < self.geometry.x_star):
            raise MeshGeometryMismatch(
                f"source range {s[0]} must lie in (x_L, x_star) = ({self.geometry.x_L}, "
                f"{self.geometry.x_star})")
        return s

    def load_vector(self, source):
        """Right-hand side and Dirichlet values for one source."""
        basis, mesh = self.basis, self.mesh
        b = np.zeros(mesh.n_vertices, dtype=complex)
        betas, w = basis.betas, basis.width
        if len(self._neu_edges):
            pts = self._neu_pts.reshape(-1, 2)
            _, gx, gy = kernels.modal_green(pts, source[None], betas, w, grad=True)
            gx = gx[0].reshape(self._neu_pts.shape[:2])
            gy = gy[0].reshape(self._neu_pts.shape[:2])
            dn = gx * self._neu_nrm[:, 0:1] + gy * self._neu_nrm[:, 1:2]
            val = -dn * self._neu_w
            np.add.at(b, self._neu_edges[:, 0], (val * (1.0 - _G3_T)).sum(axis=1))
            np.add.at(b, self._neu_edges[:, 1], (val * _G3_T).sum(axis=1))
        if len(self._interior):
            pts = self._vol_pts.reshape(-1, 2)
            gv = kernels.modal_green(pts, source[None], betas, w)[0].reshape(self._vol_w.shape)
            val = self._vol_coef * gv * self._vol_w
            tris = mesh.triangles[self._interior]
            for i in range(3):
                np.add.at(b, tris[:, i], (val * _T7_BARY[None, :, i]).sum(axis=1))
        ud = np.zeros(len(self._dirichlet), dtype=complex)
        if len(self._dirichlet):
            ud = -kernels.modal_green(mesh.vertices[self._dirichlet], source[None], betas, w)[0]
        return b, ud

    def solve(self, source):
        """Scattered field for a point source at ``source``."""
        source = self._check_source(source)
        b, ud = self.load_vector(source)
        n = self.mesh.n_vertices
        rhs = b[self._free] - (self._A_fd @ ud if len(ud) else 0.0)
        x = np.zeros(n, dtype=complex)
        x[self._dirichlet] = ud
        full_rhs = b.copy()
        full_rhs[self._dirichlet] = 0.0
        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            return FieldSolution(self.mesh, x, source, 0.0)
        lu = self.factorize()
        with self._lock:
            xf = lu.solve(rhs)
        if not np.all(np.isfinite(xf)):
            raise SingularSystem("solve produced non-finite values")
        res = np.linalg.norm(self._A_ff @ xf - rhs) / scale
        if res > RESIDUAL_TOL:
            raise SingularSystem(
                f"relative residual {res:.2e} exceeds {RESIDUAL_TOL:g}; the wavenumber may be exceptional")
        x[self._free] = xf
        return FieldSolution(self.mesh, x, source, float(res))

    def solve_many(self, sources, workers=1):
        """Solve for each source in order; results keep the input order."""
        sources = np.asarray(sources, dtype=float).reshape(-1, 2)
        self.factorize()
        if workers <= 1:
            return [self.solve(s) for s in sources]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(self.solve, sources))


def solve_scattered(geometry, basis, mesh, source, mass_blend=DEFAULT_MASS_BLEND):
    """Scattered field of one source; see :class:`HelmholtzProblem`."""
    return HelmholtzProblem(geometry, basis, mesh, mass_blend).solve(source)


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------
def interpolation_matrix(mesh, points):
    """Sparse ``(n_points, n_vertices)`` P1 interpolation operator."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    tri, bary = kernels.locate_points(pts, mesh.vertices, mesh.triangles)
    if np.any(tri < 0):
        bad = pts[np.nonzero(tri < 0)[0][0]]
        raise CrossSectionOutsideDomain(f"point ({bad[0]:.6g}, {bad[1]:.6g}) is outside the mesh")
    rows = np.repeat(np.arange(len(pts)), 3)
    cols = mesh.triangles[tri].ravel()
    return sp.csr_matrix((bary.ravel(), (rows, cols)), shape=(len(pts), mesh.n_vertices))


def simpson_weights(n, h):
    """Composite Simpson weights for ``n`` equispaced samples of spacing ``h``.

    Odd ``n`` gives the classical rule. For even ``n`` the last three
    intervals use the 3/8 rule.
    """
    if n < 3:
        raise ValueError("Simpson quadrature needs at least three samples")
    w = np.zeros(n)
    m = n if n % 2 == 1 else n - 3
    if m >= 3:
        w[:m:2] += 2.0
        w[1:m:2] = 4.0
        w[0] = w[m - 1] = 1.0
        w[:m] *= h / 3.0
    if n % 2 == 0:
        w[n - 4:] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def cross_section_quadrature(width, n_q=801):
    n_q = max(3, int(n_q) | 1)
    y = np.linspace(0.0, width, n_q)
    return y, simpson_weights(n_q, width / (n_q - 1))


def extract_modal_amplitudes(field, basis, x_c, n_q=801, geometry=None):
    """Outgoing modal amplitudes ``alpha_j`` of a field below the perturbations.

    The field is interpolated on a cross-range grid at ``x_c``, projected on
    each ``psi_j`` by Simpson's rule and divided by ``exp(-1j beta_j x_c)``.
    Evanescent amplitudes whose range factor underflows are reported as 0.
    """
    mesh = field.mesh
    xmin, xmax = mesh.vertices[:, 0].min(), mesh.vertices[:, 0].max()
    if not xmin < x_c < xmax:
        raise CrossSectionOutsideDomain(f"x_c = {x_c} outside the mesh range ({xmin}, {xmax})")
    if geometry is not None and not x_c <= geometry.x_star:
        raise CrossSectionOutsideDomain(f"x_c = {x_c} is above x_star = {geometry.x_star}")
    y, wq = cross_section_quadrature(basis.width, n_q)
    vals = field.at(np.column_stack([np.full_like(y, x_c), y]))
    proj = basis.psi(y) @ (wq * vals)
    expo = -1j * basis.betas * x_c
    ok = expo.real < 700.0
    alpha = np.zeros(basis.n_total, dtype=complex)
    alpha[ok] = proj[ok] / np.exp(expo[ok])
    return ModalCoefficients(alpha, float(x_c))


def eval_at_sensors(alphas, basis, sensors):
    """Field at the sensors from propagating amplitudes only."""
    sensors = np.asarray(sensors, dtype=float).reshape(-1, 2)
    x_A = sensors[0, 0]
    if np.any(np.abs(sensors[:, 0] - x_A) > 1e-12 * max(1.0, abs(x_A))):
        raise MeshGeometryMismatch("all sensors must share one range")
    n = basis.n_prop
    a = np.asarray(alphas.values, dtype=complex)[:n]
    return basis.psi(sensors[:, 1], n).T @ (a * np.exp(-1j * basis.betas[:n].real * x_A))


# ---------------------------------------------------------------------------
# Manufactured outgoing-mode oracle
# ---------------------------------------------------------------------------
def outgoing_mode(basis, j, points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return basis.psi(pts[:, 1], j + 1)[j] * np.exp(-1j * basis.betas[j] * pts[:, 0])


def manufactured_mode_error(basis, j, h, length=None, mass_blend=DEFAULT_MASS_BLEND,
                            mesh=None):
    """Relative error of the discrete outgoing mode ``j`` on a bare strip.

    The exact trace of ``psi_j(y) exp(-1j beta_j x)`` is imposed as Dirichlet
    data at ``x = 0`` and the DtN map closes the box at ``x = -length``.

    Returns
    -------
    dict
        ``l2`` (continuous relative L2 error), ``nodal`` (relative discrete
        max error), ``h_max`` and ``n_vertices``.
    """
    w = basis.width
    length = w if length is None else float(length)
    if mesh is None:
        geo = ScenarioGeometry(basis.spec, x_star=-0.5 * length, x_L=-length)
        mesh = build_mesh(geo, h)
    k2 = basis.wavenumber ** 2
    K, M = stiffness_and_mass(mesh, None, mass_blend)
    nodes, D = dtn_block(mesh, basis, -length)
    n = mesh.n_vertices
    r, c = np.meshgrid(nodes, nodes, indexing="ij")
    A = (K - k2 * M - sp.coo_matrix((D.ravel(), (r.ravel(), c.ravel())), shape=(n, n))).tocsr()
    dir_nodes = np.nonzero(np.abs(mesh.vertices[:, 0]) < 1e-12 * max(1.0, w))[0]
    free = np.setdiff1d(np.arange(n), dir_nodes)
    exact_nodes = outgoing_mode(basis, j, mesh.vertices)
    x = np.zeros(n, dtype=complex)
    x[dir_nodes] = exact_nodes[dir_nodes]
    rhs = -(A[free][:, dir_nodes] @ x[dir_nodes])
    x[free] = spla.spsolve(A[free][:, free].tocsc(), rhs)
    qp = gauss_triangle_points(mesh, np.arange(mesh.n_triangles))  # (nt, 7, 2)
    uh = np.einsum("qi,ti->tq", _T7_BARY, x[mesh.triangles])
    ue = outgoing_mode(basis, j, qp.reshape(-1, 2)).reshape(uh.shape)
    wts = mesh.areas()[:, None] * _T7_W[None, :]
    l2 = math.sqrt((wts * np.abs(uh - ue) ** 2).sum() / (wts * np.abs(ue) ** 2).sum())
    nodal = np.abs(x - exact_nodes).max() / np.abs(exact_nodes).max()
    return {"l2": l2, "nodal": float(nodal), "h_max": float(mesh.edge_lengths().max()),
            "n_vertices": n}
