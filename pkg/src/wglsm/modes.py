"""Modal machinery of the unperturbed terminating waveguide.

Coordinates are ``(range, cross_range)``: range ``x <= 0`` is measured from
the sound-hard end wall at ``x = 0`` and the cross-range lies in
``[0, width]``. Cross-section eigenfunctions are the Neumann cosines.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (BasisMismatch, CoincidentPoints, CutoffWavenumber,
                     IndexOutOfRange, InvalidSpec, SearchPointOutsideStrip)

logger = logging.getLogger(__name__)

CUTOFF_RTOL = 1e-10
TAIL_TOL = 1e-12
MAX_MODES = 200


@dataclass(frozen=True)
class WaveguideSpec:
    """Cross-section length and wavenumber of the waveguide."""

    width: float
    wavenumber: float

    def __post_init__(self):
        for name in ("width", "wavenumber"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
                raise InvalidSpec(f"{name} must be a positive finite number, got {v!r}")

    @classmethod
    def from_mode_count(cls, mode_count, width=1.0):
        """Wavenumber halfway between cutoffs so that ``J + 1 = mode_count``."""
        if int(mode_count) != mode_count or mode_count < 1:
            raise InvalidSpec(f"mode_count must be a positive integer, got {mode_count!r}")
        return cls(float(width), (mode_count - 0.5) * math.pi / width)

    @property
    def wavelength(self):
        return 2.0 * math.pi / self.wavenumber

    @property
    def j_prop(self):
        return int(math.floor(self.wavenumber * self.width / math.pi))


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Eigenvalues, mode wavenumbers and propagating count for a spec.

    ``betas[j]`` is real positive for ``j <= j_prop`` and ``1j * sqrt(lambda_j
    - k**2)`` beyond.
    """

    spec: WaveguideSpec
    lambdas: np.ndarray
    betas: np.ndarray
    j_prop: int
    n_total: int

    @property
    def n_prop(self):
        return self.j_prop + 1

    @property
    def width(self):
        return self.spec.width

    @property
    def wavenumber(self):
        return self.spec.wavenumber

    def norms(self, n=None):
        n = self.n_total if n is None else n
        c = np.full(n, math.sqrt(2.0 / self.width))
        c[0] = 1.0 / math.sqrt(self.width)
        return c

    def psi(self, xp, n=None):
        """Eigenfunction values, shape ``(n, len(xp))``."""
        n = self.n_total if n is None else n
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        q = math.pi * np.arange(n) / self.width
        return self.norms(n)[:, None] * np.cos(np.outer(q, xp))

    def dpsi(self, xp, n=None):
        n = self.n_total if n is None else n
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        q = math.pi * np.arange(n) / self.width
        return -(self.norms(n) * q)[:, None] * np.sin(np.outer(q, xp))

    def evanescent_decay(self):
        """``|beta_{J+1}|``, the slowest evanescent decay rate."""
        return float(abs(self.betas[self.n_prop])) if self.n_total > self.n_prop else float(
            math.sqrt((math.pi * self.n_prop / self.width) ** 2 - self.wavenumber ** 2))


@dataclass(frozen=True, eq=False)
class ModalCoefficients:
    """Complex coefficients indexed by mode, attached to a range station."""

    values: np.ndarray
    range_station: float

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.asarray(self.values, dtype=complex)))

    def __len__(self):
        return self.values.shape[0]


def mode_betas(lambdas, k_squared):
    """Mode wavenumbers for given eigenvalues; evanescent ones are ``1j*|.|``."""
    lambdas = np.asarray(lambdas, dtype=float)
    diff = k_squared - lambdas
    return np.where(diff >= 0, np.sqrt(np.abs(diff)) + 0j, 1j * np.sqrt(np.abs(diff)))


def dtn_factors(lambdas, k_squared):
    """Modal multipliers ``1j*beta_j`` of the Dirichlet-to-Neumann map.

    ``k_squared`` may be negative (e.g. ``-1`` for the map at ``k = i``).
    Evanescent factors come out exactly real and negative.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    diff = k_squared - lambdas
    out = np.empty(lambdas.shape, dtype=complex)
    prop = diff >= 0
    out[prop] = 1j * np.sqrt(diff[prop])
    out[~prop] = -np.sqrt(-diff[~prop])
    return out


def default_n_total(spec, d_min, tol=TAIL_TOL):
    """Smallest mode count whose first dropped term decays below ``tol``.

    The decay is measured over the range separation ``d_min``; the result is
    clamped to ``[2 (J + 1), 200]``.
    """
    n_prop = spec.j_prop + 1
    lo = 2 * n_prop
    if d_min <= 0:
        return MAX_MODES
    k2 = spec.wavenumber ** 2
    target = -math.log(tol) / d_min
    n = n_prop
    while n < MAX_MODES:
        if math.sqrt(max((math.pi * n / spec.width) ** 2 - k2, 0.0)) > target:
            break
        n += 1
    return int(min(max(n, lo), MAX_MODES))


def build_mode_basis(spec, n_total):
    """Eigenpairs and mode wavenumbers of the unperturbed cross-section.

    Raises
    ------
    CutoffWavenumber
        If ``k**2`` is within a relative ``1e-10`` of some eigenvalue.
    InvalidSpec
        If ``n_total`` is smaller than the number of propagating modes.
    """
    if not isinstance(spec, WaveguideSpec):
        raise InvalidSpec("spec must be a WaveguideSpec")
    if int(n_total) != n_total or n_total < 1:
        raise InvalidSpec(f"n_total must be a positive integer, got {n_total!r}")
    n_total = int(n_total)
    k2 = spec.wavenumber ** 2
    ratio = spec.wavenumber * spec.width / math.pi
    for j in (math.floor(ratio), math.ceil(ratio)):
        lam = (math.pi * j / spec.width) ** 2
        if abs(k2 - lam) / k2 < CUTOFF_RTOL:
            raise CutoffWavenumber(
                f"k = {spec.wavenumber!r} is at the cutoff of mode {j} (lambda_j = k^2)")
    j_prop = spec.j_prop
    # guard floor() against rounding right below an integer ratio
    while (math.pi * (j_prop + 1) / spec.width) ** 2 <= k2:
        j_prop += 1
    while (math.pi * j_prop / spec.width) ** 2 > k2:
        j_prop -= 1
    if n_total < j_prop + 1:
        raise InvalidSpec(f"n_total = {n_total} is below the {j_prop + 1} propagating modes")
    lambdas = (math.pi * np.arange(n_total) / spec.width) ** 2
    betas = mode_betas(lambdas, k2)
    return ModeBasis(spec, _readonly(lambdas), _readonly(betas), j_prop, n_total)


def eval_eigenfunction(basis, j, xp):
    """``psi_j(xp)``; accepts scalar or array cross-range."""
    if int(j) != j or not 0 <= j < basis.n_total:
        raise IndexOutOfRange(f"mode index {j} outside [0, {basis.n_total})")
    xp_arr = np.asarray(xp, dtype=float)
    if np.any(xp_arr < -1e-12 * basis.width) or np.any(xp_arr > basis.width * (1 + 1e-12)):
        raise InvalidSpec("cross-range outside [0, width]")
    c = 1.0 / math.sqrt(basis.width) if j == 0 else math.sqrt(2.0 / basis.width)
    val = c * np.cos(math.pi * j * xp_arr / basis.width)
    return float(val) if val.ndim == 0 else val


def _as_points(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return x.reshape(-1, 2), single


def green(basis, x, y):
    """Green's function ``G(x, y)`` of the terminating waveguide.

    ``x`` may be one point or an ``(n, 2)`` array; ``y`` is one point. The
    modal series is truncated at ``basis.n_total`` terms, so callers should
    keep the range separation large enough for the evanescent tail to be
    negligible (see :func:`default_n_total`).
    """
    pts, single = _as_points(x)
    y = np.asarray(y, dtype=float).reshape(2)
    if np.any(np.hypot(pts[:, 0] - y[0], pts[:, 1] - y[1]) < 1e-12 * basis.width):
        raise CoincidentPoints("field point coincides with the source")
    g = kernels.modal_green(pts, y[None, :], basis.betas, basis.width)[0]
    return complex(g[0]) if single else g


def green_gradient(basis, x, y):
    """Gradient of ``G(., y)`` with respect to the field point, shape ``(n, 2)``."""
    pts, single = _as_points(x)
    y = np.asarray(y, dtype=float).reshape(2)
    if np.any(np.hypot(pts[:, 0] - y[0], pts[:, 1] - y[1]) < 1e-12 * basis.width):
        raise CoincidentPoints("field point coincides with the source")
    _, gx, gy = kernels.modal_green(pts, y[None, :], basis.betas, basis.width, grad=True)
    out = np.stack([gx[0], gy[0]], axis=1)
    return out[0] if single else out


def mode_coeff_matrix(basis, z, x_A):
    """Propagating-mode projections of ``G((x_A, .), z)``, shape ``(n, J+1)``.

    Closed form of the cross-range projection at the array range; the
    evanescent part is dropped.
    """
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    zx, zy = z[:, 0], z[:, 1]
    w = basis.width
    if np.any(zx <= x_A) or np.any(zx >= 0) or np.any(zy < 0) or np.any(zy > w):
        raise SearchPointOutsideStrip(
            "search points must satisfy x_A < range < 0 and 0 <= cross_range <= width")
    n = basis.n_prop
    beta = basis.betas[:n].real
    psi = basis.psi(zy, n).T  # (npts, n)
    phase = np.exp(1j * np.outer(zx - x_A, beta)) + np.exp(-1j * np.outer(x_A + zx, beta))
    return (0.5j / beta) * psi * phase


def green_mode_coeff(basis, z, x_A):
    """``b_z``: modal coefficients of the Green's function on the array row.

    Entries beyond the propagating modes are zero.
    """
    b = mode_coeff_matrix(basis, z, x_A)[0]
    vals = np.zeros(basis.n_total, dtype=complex)
    vals[: basis.n_prop] = b
    return ModalCoefficients(vals, float(x_A))


def dtn_apply(basis, g):
    """Apply the Dirichlet-to-Neumann map in modal coordinates."""
    if len(g.values) != basis.n_total:
        raise BasisMismatch(f"{len(g.values)} coefficients for a {basis.n_total}-mode basis")
    return ModalCoefficients(dtn_factors(basis.lambdas, basis.wavenumber ** 2) * g.values,
                             g.range_station)


def check_standoff(basis, x_I, x_A):
    """Warn when evanescent modes are not negligible between array and image."""
    if not x_I > x_A:
        raise SearchPointOutsideStrip(f"imaging region start {x_I} must exceed x_A = {x_A}")
    need = 1.0 / basis.evanescent_decay()
    if x_I - x_A <= need:
        warnings.warn(f"imaging standoff {x_I - x_A:.3g} is below 1/|beta_J+1| = {need:.3g}; "
                      "evanescent modes are not negligible", stacklevel=2)
        return False
    return True
