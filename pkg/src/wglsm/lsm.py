"""Linear sampling imaging from a modal response matrix.

For each search point ``z`` the near-field equation ``U g = b_z`` is solved
with Tikhonov regularization, the parameter being fixed by Morozov's
discrepancy principle ``||U g - b_z|| = eps ||g||``. The imaging driver
measures ``eps`` in units of the spectral norm of ``U``. The indicator
``1 / ||g_z||`` is large on the support of the perturbation.

Partial apertures are handled through the Gram matrix of the eigenfunctions
restricted to the aperture and its index-truncated spectral pseudo-inverse.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyResponse, InvalidFraction, ZeroData
from .fem import cross_section_quadrature, simpson_weights
from .modes import ModalCoefficients, check_standoff, mode_coeff_matrix

logger = logging.getLogger(__name__)

DEFAULT_EPS = 0.01
DEFAULT_THRESHOLD = 0.7
EMPTY_RTOL = 1e-12
MAGNITUDE_CUTOFF = 0.5

FLAG_OK = 0
FLAG_NO_ROOT = 1
FLAG_NO_ROOT_UPPER = 2
FLAG_NAMES = {FLAG_OK: "ok", FLAG_NO_ROOT: "no-root", FLAG_NO_ROOT_UPPER: "no-root-upper"}


# ---------------------------------------------------------------------------
# Aperture model
# ---------------------------------------------------------------------------
def _sinc_int(x):
    """``np.sinc`` that is exactly zero at nonzero integers."""
    x = np.asarray(x, dtype=float)
    out = np.sinc(x)
    r = np.rint(x)
    out[(np.abs(x - r) == 0) & (r != 0)] = 0.0
    return out


def _sorted_eigh(m):
    w, v = np.linalg.eigh(m)
    w, v = w[::-1], v[:, ::-1].copy()
    # deterministic sign: largest-magnitude entry of every vector positive
    idx = np.argmax(np.abs(v), axis=0)
    v *= np.sign(v[idx, np.arange(v.shape[1])])
    return w, v


def effective_rank_index(j_prop, fraction):
    """``J_M = floor(J * fraction)`` with a guard against round-off below integers."""
    return int(math.floor(j_prop * fraction + 1e-9))


@dataclass(frozen=True, eq=False)
class ApertureModel:
    """Gram matrix of the restricted eigenfunctions and its pseudo-inverse.

    Attributes
    ----------
    fraction : float
    gram : ndarray, shape (J+1, J+1)
    eigvals : ndarray
        Descending eigenvalues ``sigma_j``.
    eigvecs : ndarray
        Orthogonal matrix whose columns are the eigenvectors.
    j_cut : int
        ``J_M``; eigenpairs with index ``> J_M`` are dropped from the inverse.
    pseudo_inverse : ndarray
    cutoff : str
        ``"index"`` or ``"magnitude"``.
    """

    fraction: float
    gram: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    j_cut: int
    pseudo_inverse: np.ndarray
    cutoff: str = "index"

    @property
    def n_modes(self):
        return self.gram.shape[0]

    @property
    def projector(self):
        """``M^+ M``, the orthogonal projector onto the kept eigenvectors."""
        return self.pseudo_inverse @ self.gram

    @property
    def is_full(self):
        return self.fraction == 1.0


def gram_entries(n_modes, fraction):
    """``M[j, j'] = integral of psi_j psi_j'`` over ``(0, fraction * width)``."""
    j = np.arange(n_modes)
    jj, kk = np.meshgrid(j, j, indexing="ij")
    f = float(fraction)
    M = f * (_sinc_int((jj - kk) * f) + _sinc_int((jj + kk) * f))
    M[0, :] = math.sqrt(2.0) * f * _sinc_int(j * f)
    M[:, 0] = M[0, :]
    M[0, 0] = f
    return M


def gram_matrix(basis_or_j, fraction, cutoff="index"):
    """Aperture model for ``J + 1`` propagating modes and an aperture fraction.

    ``basis_or_j`` is a :class:`~wglsm.modes.ModeBasis` or the last
    propagating index ``J``.
    """
    j_prop = basis_or_j if isinstance(basis_or_j, (int, np.integer)) else basis_or_j.j_prop
    if not (isinstance(fraction, (int, float, np.floating)) and 0 < fraction <= 1):
        raise InvalidFraction(f"aperture fraction must lie in (0, 1], got {fraction!r}")
    if cutoff not in ("index", "magnitude"):
        raise InvalidFraction(f"cutoff must be 'index' or 'magnitude', got {cutoff!r}")
    n = int(j_prop) + 1
    fraction = float(fraction)
    if fraction == 1.0:
        eye = np.eye(n)
        return ApertureModel(1.0, eye, np.ones(n), eye.copy(), int(j_prop), eye.copy(), cutoff)
    M = gram_entries(n, fraction)
    w, V = _sorted_eigh(M)
    j_cut = effective_rank_index(j_prop, fraction)
    keep = np.arange(n) <= j_cut if cutoff == "index" else w >= MAGNITUDE_CUTOFF
    keep &= w > 0
    inv = np.zeros(n)
    inv[keep] = 1.0 / w[keep]
    pinv = (V * inv) @ V.T
    return ApertureModel(fraction, M, w, V, j_cut, pinv, cutoff)


def project_partial(U_A, b, model):
    """``(M^+ U_A M^+, M^+ M b)`` for a partial-aperture response.

    ``U_A`` may be a :class:`~wglsm.survey.ResponseMatrix` or an array and
    ``b`` a :class:`ModalCoefficients`, a vector or a stack of row vectors.
    """
    U = getattr(U_A, "entries", U_A)
    U = np.asarray(U)
    n = model.n_modes
    if U.shape != (n, n):
        raise DimensionMismatch(f"response matrix {U.shape} vs aperture model with {n} modes")
    bv = b.values[:n] if isinstance(b, ModalCoefficients) else np.asarray(b)
    if bv.shape[-1] != n:
        raise DimensionMismatch(f"data vector of length {bv.shape[-1]} vs {n} modes")
    Pi = model.pseudo_inverse
    U_t = Pi @ U @ Pi
    b_t = bv @ model.projector.T
    return U_t, b_t


# ---------------------------------------------------------------------------
# Prolate route
# ---------------------------------------------------------------------------
def prolate_matrix(j_prop, fraction):
    """Toeplitz sinc matrix of size ``2J + 1`` indexed ``-J..J``."""
    m = np.arange(-j_prop, j_prop + 1)
    d = m[:, None] - m[None, :]
    return fraction * _sinc_int(d * fraction)


def prolate_spectrum(j_prop, fraction, n_q=801):
    """Even spectrum of the prolate matrix mapped to the Gram eigenpairs.

    Returns
    -------
    dict
        ``sigmas`` (descending), ``j_cut``, ``coefficients`` (column ``j``
        holds the eigenfunction coefficients of ``p_j`` in the ``psi_l``),
        ``orthogonality_full`` and ``orthogonality_aperture`` (max
        deviations of the two orthogonality relations by quadrature).
    """
    if int(j_prop) != j_prop or j_prop < 1:
        raise InvalidFraction(f"J must be a positive integer, got {j_prop!r}")
    if not 0 < fraction <= 1:
        raise InvalidFraction(f"aperture fraction must lie in (0, 1], got {fraction!r}")
    J = int(j_prop)
    T = prolate_matrix(J, float(fraction))
    size = 2 * J + 1
    R = np.eye(size)[::-1]
    # push the odd subspace (R v = -v) to eigenvalues <= -2
    w, tau = _sorted_eigh(T - 1.5 * (np.eye(size) - R))
    w, tau = w[: J + 1], tau[:, : J + 1]
    V = np.empty((J + 1, J + 1))
    V[0] = tau[J]
    V[1:] = math.sqrt(2.0) * tau[J + 1:]
    idx = np.argmax(np.abs(V), axis=0)
    V *= np.sign(V[idx, np.arange(J + 1)])

    y, wq = cross_section_quadrature(1.0, n_q)
    c = np.full(J + 1, math.sqrt(2.0))
    c[0] = 1.0
    psi = c[:, None] * np.cos(np.pi * np.outer(np.arange(J + 1), y))
    p = V.T @ psi
    full = (p * wq) @ p.T
    ya = np.linspace(0.0, float(fraction), n_q | 1)
    wa = simpson_weights(len(ya), ya[1] - ya[0])
    pa = V.T @ (c[:, None] * np.cos(np.pi * np.outer(np.arange(J + 1), ya)))
    part = (pa * wa) @ pa.T
    return {
        "sigmas": w,
        "j_cut": effective_rank_index(J, fraction),
        "coefficients": V,
        "orthogonality_full": float(np.abs(full - np.eye(J + 1)).max()),
        "orthogonality_aperture": float(np.abs(part - np.diag(w)).max()),
    }


# ---------------------------------------------------------------------------
# Morozov-Tikhonov solve
# ---------------------------------------------------------------------------
class TikhonovResult(NamedTuple):
    g: np.ndarray
    alpha: float
    no_root: bool
    residual: float
    gnorm: float


def _svd_data(U, B):
    Wl, s, Vh = np.linalg.svd(U)
    bhat = B @ Wl.conj()
    bperp = B - bhat @ Wl.T
    return Wl, s, Vh, bhat, np.sum(np.abs(bperp) ** 2, axis=-1)


def morozov_tikhonov_solve(U, b, eps=DEFAULT_EPS):
    """Tikhonov solution of ``U g = b`` with the discrepancy-principle parameter.

    Raises
    ------
    ZeroData
        If ``b`` vanishes or ``||U||_F <= 1e-14 ||b||``.
    """
    U = np.asarray(U, dtype=complex)
    b = np.asarray(b, dtype=complex).ravel()
    if U.ndim != 2 or U.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"U {U.shape} and b {b.shape} are incompatible")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    nb = np.linalg.norm(b)
    if nb == 0 or np.linalg.norm(U) <= 1e-14 * nb:
        raise ZeroData("U or b is zero to working precision")
    Wl, s, Vh, bhat, bperp2 = _svd_data(U, b[None, :])
    alpha, gn, res, flag = kernels.morozov_bisection(s, np.abs(bhat) ** 2, bperp2, eps)
    a = float(alpha[0])
    g = Vh.conj().T @ (s / (s ** 2 + a) * bhat[0])
    return TikhonovResult(g, a, bool(flag[0] != FLAG_OK), float(res[0]), float(gn[0]))


# ---------------------------------------------------------------------------
# Sampling grid and indicator image
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SamplingGrid:
    """Cell-centred rectangular grid of search points.

    Points are ordered row-major, index ``iy * nx + ix`` with cross-range
    increasing with ``iy``.
    """

    x_range: tuple
    y_range: tuple
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one point per direction")
        if not self.x_range[0] < self.x_range[1] or not self.y_range[0] < self.y_range[1]:
            raise ValueError("grid ranges must be increasing")

    @classmethod
    def from_resolution(cls, x_I, x_end, width, h):
        nx = max(1, int(math.ceil((x_end - x_I) / h - 1e-9)))
        ny = max(1, int(math.ceil(width / h - 1e-9)))
        return cls((float(x_I), float(x_end)), (0.0, float(width)), nx, ny)

    @property
    def xs(self):
        x0, x1 = self.x_range
        return x0 + (np.arange(self.nx) + 0.5) * (x1 - x0) / self.nx

    @property
    def ys(self):
        y0, y1 = self.y_range
        return y0 + (np.arange(self.ny) + 0.5) * (y1 - y0) / self.ny

    @property
    def spacing(self):
        return ((self.x_range[1] - self.x_range[0]) / self.nx,
                (self.y_range[1] - self.y_range[0]) / self.ny)

    def points(self):
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def __len__(self):
        return self.nx * self.ny


@dataclass(frozen=True, eq=False)
class IndicatorImage:
    """Indicator values ``1 / ||g_z||`` on a sampling grid.

    Failed points (no Morozov root) hold NaN in ``values`` and a nonzero
    entry in ``flags``.
    """

    grid: SamplingGrid
    values: np.ndarray
    alphas: np.ndarray
    eps: float
    flags: Optional[np.ndarray] = None

    def normalized(self):
        """log10 of the indicator scaled to ``[0, 1]`` over the valid points."""
        with np.errstate(divide="ignore", invalid="ignore"):
            L = np.log10(self.values)
        ok = np.isfinite(L)
        out = np.full(L.shape, np.nan)
        if not ok.any():
            return out
        lo, hi = L[ok].min(), L[ok].max()
        out[ok] = 0.0 if hi == lo else (L[ok] - lo) / (hi - lo)
        return out

    def mask(self, threshold=DEFAULT_THRESHOLD):
        n = self.normalized()
        return np.nan_to_num(n, nan=-1.0) >= threshold

    def summary(self, threshold=DEFAULT_THRESHOLD):
        m = self.mask(threshold)
        pts = self.grid.points()
        ok = np.isfinite(self.values)
        out = {
            "n_points": int(len(pts)),
            "n_failed": int((~ok).sum()),
            "indicator_min": float(np.nanmin(self.values)) if ok.any() else None,
            "indicator_max": float(np.nanmax(self.values)) if ok.any() else None,
            "threshold": float(threshold),
            "n_masked": int(m.sum()),
            "mask_bbox": None,
            "mask_centroid": None,
            "eps": float(self.eps),
        }
        if m.any():
            mp = pts[m]
            out["mask_bbox"] = [float(mp[:, 0].min()), float(mp[:, 1].min()),
                                float(mp[:, 0].max()), float(mp[:, 1].max())]
            out["mask_centroid"] = [float(mp[:, 0].mean()), float(mp[:, 1].mean())]
        return out

    def write_csv(self, path):
        pts = self.grid.points()
        lines = ["x,y,indicator,alpha"]
        for (x, y), v, a in zip(pts.tolist(), self.values.tolist(), self.alphas.tolist()):
            lines.append(f"{x:.17g},{y:.17g},{v:.17g},{a:.17g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def write_pgm(self, path):
        """8-bit binary graymap, largest cross-range in the top row."""
        n = self.normalized().reshape(self.grid.ny, self.grid.nx)
        img = np.rint(255.0 * np.nan_to_num(n, nan=0.0)).astype(np.uint8)[::-1]
        with open(path, "wb") as fh:
            fh.write(f"P5\n{self.grid.nx} {self.grid.ny}\n255\n".encode("ascii"))
            fh.write(img.tobytes())


def compute_indicator(U_eff, grid, basis, x_A, eps=DEFAULT_EPS, model=None):
    """Linear sampling indicator on a grid of search points.

    Parameters
    ----------
    U_eff : array_like or ResponseMatrix
        ``U`` for a full aperture, ``M^+ U_A M^+`` for a partial one.
    eps : float
        Discrepancy level relative to the spectral norm of ``U_eff``: each
        point solves ``||U g - b|| = eps ||U||_2 ||g||``. The relative form
        makes the image invariant under a joint rescaling of ``U`` and the
        data vectors and lets ``eps`` be compared with the noise level.
    model : ApertureModel, optional
        When given, the data vectors are projected with ``M^+ M``.

    Raises
    ------
    EmptyResponse
        If ``||U||_F`` is negligible against the data vectors (nothing scatters).
    """
    U = np.asarray(getattr(U_eff, "entries", U_eff), dtype=complex)
    n = basis.n_prop
    if U.shape != (n, n):
        raise DimensionMismatch(f"response matrix {U.shape} vs {n} propagating modes")
    check_standoff(basis, grid.x_range[0], x_A)
    pts = grid.points()
    B = mode_coeff_matrix(basis, pts, x_A)
    if model is not None:
        if model.n_modes != n:
            raise DimensionMismatch("aperture model does not match the basis")
        B = B @ model.projector.T
    bnorm = np.linalg.norm(B, axis=1)
    if np.linalg.norm(U) <= EMPTY_RTOL * bnorm.max():
        raise EmptyResponse("response matrix is zero: nothing to image")
    _, s, _, bhat, bperp2 = _svd_data(U, B)
    alpha, gn, _, flag = kernels.morozov_bisection(s, np.abs(bhat) ** 2, bperp2, eps * s[0])
    with np.errstate(divide="ignore"):
        vals = np.where((flag == FLAG_OK) & (gn > 0), 1.0 / gn, np.nan)
    if np.any(flag != FLAG_OK):
        logger.warning("%d of %d search points have no Morozov root", int((flag != 0).sum()),
                       len(flag))
    return IndicatorImage(grid, vals, alpha, float(eps), flag.astype(np.int8))
