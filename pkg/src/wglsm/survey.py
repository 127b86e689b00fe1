"""Synthetic array surveys and modal response matrices.

A survey places a vertical line of co-located sources and receivers at
range ``x_A``, solves one scattering problem per source and records the
scattered field at every receiver. The modal response matrix is obtained
by Simpson quadrature of the sensor data against the eigenfunctions in
both sensor variables.
"""

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (BasisMismatch, HeaderMismatch, InvalidArray, TooFewSensors,
                     WaveguideError)
from .fem import HelmholtzProblem, eval_at_sensors, extract_modal_amplitudes, simpson_weights

logger = logging.getLogger(__name__)

NOMINAL_SENSOR_COUNT = {20: 25, 50: 55}


def default_sensor_spacing(basis):
    """Sensor spacing ``width / N`` with ``N`` even.

    ``N`` is the smallest even integer no smaller than both the nominal
    sensor count for the mode count and ``2 (J + 1)``, so the row is
    Nyquist-dense for ``psi_J`` and Simpson's rule uses an odd node count.
    """
    n_prop = basis.n_prop
    nominal = NOMINAL_SENSOR_COUNT[20] if n_prop <= 20 else NOMINAL_SENSOR_COUNT[50]
    n = max(nominal, 2 * n_prop)
    n += n % 2
    return basis.width / n


@dataclass(frozen=True)
class ArraySpec:
    """Co-located source/receiver line at range ``x_A``.

    Sensors sit at cross-ranges ``0, spacing, 2 spacing, ...`` up to the
    aperture length.
    """

    x_A: float
    aperture: float
    spacing: float
    width: float = 1.0

    def __post_init__(self):
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise InvalidArray(f"sensor spacing must be positive, got {self.spacing}")
        if not 0 < self.aperture <= self.width * (1 + 1e-12):
            raise InvalidArray(f"aperture must lie in (0, {self.width}], got {self.aperture}")
        if not self.x_A < 0:
            raise InvalidArray(f"array range must be negative, got {self.x_A}")

    @classmethod
    def default(cls, basis, x_A, fraction=1.0):
        w = basis.width
        return cls(float(x_A), float(fraction) * w, default_sensor_spacing(basis), w)

    @property
    def fraction(self):
        return self.aperture / self.width

    @property
    def is_full(self):
        return abs(self.aperture - self.width) <= 1e-12 * self.width

    @property
    def n_sensors(self):
        return int(math.floor(self.aperture / self.spacing + 1e-9)) + 1

    def positions(self):
        y = self.spacing * np.arange(self.n_sensors)
        return np.column_stack([np.full_like(y, self.x_A), y])

    def check(self, basis, geometry=None):
        """Validate against a basis (and optionally a geometry)."""
        if abs(self.width - basis.width) > 1e-12 * basis.width:
            raise InvalidArray("array and basis disagree on the width")
        dense = int(math.floor(self.width / self.spacing + 1e-9)) + 1
        if dense < 2 * basis.n_prop:
            raise InvalidArray(
                f"spacing {self.spacing:.4g} gives {dense} sensors across the guide; "
                f"need at least {2 * basis.n_prop} to resolve {basis.n_prop} modes")
        if self.n_sensors < 3:
            raise TooFewSensors(f"{self.n_sensors} sensors in the aperture; need >= 3")
        if geometry is not None:
            if not geometry.x_L < self.x_A < geometry.x_star:
                raise InvalidArray(
                    f"x_A = {self.x_A} must lie in (x_L, x_star) = ({geometry.x_L}, "
                    f"{geometry.x_star})")


@dataclass(frozen=True, eq=False)
class SurveyData:
    """Sensor data of a survey and the per-source outgoing amplitudes.

    Attributes
    ----------
    array : ArraySpec
    data : ndarray, shape (J_A, J_A)
        ``data[r, s]`` is the scattered field at receiver ``r`` from source ``s``.
    amplitudes : ndarray, shape (J_A, n_modes)
        Outgoing modal amplitudes of each source's field (row per source).
    amplitude_station : float
        Range at which the amplitudes were extracted.
    direct : ndarray, shape (J_A, J_A), optional
        Finite element field interpolated at the receivers. Equal to
        ``data`` for direct sampling; kept for cross-checks otherwise.
    """

    array: ArraySpec
    data: np.ndarray
    amplitudes: np.ndarray = field(default=None)
    amplitude_station: float = float("nan")
    direct: np.ndarray = field(default=None)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        n = self.array.n_sensors
        if d.shape != (n, n):
            raise InvalidArray(f"sensor data has shape {d.shape}, expected {(n, n)}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        if self.amplitudes is not None:
            a = np.asarray(self.amplitudes, dtype=complex)
            if a.shape[0] != n:
                raise InvalidArray("one amplitude row per source is required")
            a.setflags(write=False)
            object.__setattr__(self, "amplitudes", a)
        if self.direct is not None:
            dd = np.asarray(self.direct, dtype=complex)
            if dd.shape != (n, n):
                raise InvalidArray(f"direct data has shape {dd.shape}, expected {(n, n)}")
            dd.setflags(write=False)
            object.__setattr__(self, "direct", dd)

    def with_data(self, which):
        """Copy whose ``data`` is the ``"direct"`` interpolated field."""
        if which != "direct":
            raise ValueError(f"unknown data kind {which!r}")
        if self.direct is None:
            raise InvalidArray("survey carries no direct data")
        return replace(self, data=self.direct)

    def restrict(self, aperture):
        """Sub-survey of the sensors inside ``(0, aperture]``."""
        sub = replace(self.array, aperture=float(aperture))
        n = sub.n_sensors
        if n > self.array.n_sensors:
            raise InvalidArray("restricted aperture exceeds the surveyed aperture")
        amp = None if self.amplitudes is None else self.amplitudes[:n]
        direct = None if self.direct is None else self.direct[:n, :n]
        return SurveyData(sub, self.data[:n, :n], amp, self.amplitude_station, direct)


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Modal response matrix ``U`` with its provenance."""

    entries: np.ndarray
    meta: dict

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise InvalidArray("response matrix must be square")
        if not np.all(np.isfinite(e)):
            raise InvalidArray("response matrix has non-finite entries")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_modes(self):
        return self.entries.shape[0]

    def symmetry_defect(self):
        nrm = np.linalg.norm(self.entries)
        return 0.0 if nrm == 0 else float(np.linalg.norm(self.entries - self.entries.T) / nrm)


def _meta(basis, array, route):
    return {"k": basis.wavenumber, "width": basis.width, "x_A": array.x_A,
            "aperture": array.aperture, "aperture_kind": "full" if array.is_full else "partial",
            "J": basis.j_prop, "noise_level": 0.0, "seed": None, "route": route}


def run_survey(geometry, basis, array, mesh, sampling="modal", problem=None, workers=1,
               mass_blend=None):
    """Solve one scattering problem per sensor and sample the fields.

    Parameters
    ----------
    sampling : {"modal", "direct"}
        ``"modal"`` extracts outgoing amplitudes at ``x_A`` and evaluates
        the propagating modes at the receivers; ``"direct"`` interpolates
        the finite element field at the receivers.
    problem : HelmholtzProblem, optional
        Reuse an existing factorization.

    Returns
    -------
    SurveyData
    """
    if sampling not in ("modal", "direct"):
        raise ValueError(f"sampling must be 'modal' or 'direct', got {sampling!r}")
    array.check(basis, geometry)
    if problem is None:
        kw = {} if mass_blend is None else {"mass_blend": mass_blend}
        problem = HelmholtzProblem(geometry, basis, mesh, **kw)
    pos = array.positions()
    n = len(pos)
    data = np.zeros((n, n), dtype=complex)
    direct = np.zeros((n, n), dtype=complex)
    amps = np.zeros((n, basis.n_total), dtype=complex)
    t0 = time.perf_counter()
    problem.factorize()
    logger.info("factorized %d dofs in %.2fs", problem.n_dofs, time.perf_counter() - t0)

    def one(i):
        try:
            sol = problem.solve(pos[i])
            a = extract_modal_amplitudes(sol, basis, array.x_A)
            dcol = sol.at(pos)
            col = eval_at_sensors(a, basis, pos) if sampling == "modal" else dcol
        except WaveguideError as exc:
            raise type(exc)(f"source {i} at {tuple(pos[i])}: {exc}") from exc
        return a.values, col, dcol

    t1 = time.perf_counter()
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(n)))
    else:
        results = [one(i) for i in range(n)]
    for i, (a, col, dcol) in enumerate(results):
        amps[i] = a
        data[:, i] = col
        direct[:, i] = dcol
    logger.info("%d forward solves in %.2fs", n, time.perf_counter() - t1)
    return SurveyData(array, data, amps, float(array.x_A), direct)


def _aperture_weights(array):
    n = array.n_sensors
    if n < 3:
        raise TooFewSensors(f"{n} sensors; Simpson quadrature needs at least 3")
    if n % 2 == 0:
        warnings.warn(f"{n} sensors: even count, closing Simpson's rule with a 3/8 panel",
                      stacklevel=3)
    return simpson_weights(n, array.spacing)


def project_to_modal(survey, basis):
    """``U[j, j'] = sum_r sum_s w_r w_s psi_j(r) psi_j'(s) u(r, s)``."""
    array = survey.array
    w = _aperture_weights(array)
    psi = basis.psi(array.positions()[:, 1], basis.n_prop) * w[None, :]
    U = psi @ survey.data @ psi.T
    return ResponseMatrix(U, _meta(basis, array, "sensors"))


def sensor_gram(array, basis):
    """Quadrature overlaps ``sum_r w_r psi_j(r) psi_j'(r)`` over the aperture."""
    y = array.positions()[:, 1]
    psi = basis.psi(y, basis.n_prop)
    return (psi * _aperture_weights(array)[None, :]) @ psi.T


def response_from_modal(survey, basis):
    """Response matrix built from the outgoing amplitudes of each source.

    The receiver sum of the modal field ``alpha_j'(s) exp(-i beta_j' x_A)``
    gives ``U = G (phase * alpha) (W Psi^T)`` with ``G`` the sensor Gram
    matrix; at full aperture ``G`` is the identity up to quadrature error.
    """
    array = survey.array
    if survey.amplitudes is None:
        raise BasisMismatch("survey carries no modal amplitudes")
    n = basis.n_prop
    if survey.amplitudes.shape[1] < n:
        raise BasisMismatch(f"{survey.amplitudes.shape[1]} amplitudes for {n} propagating modes")
    w = _aperture_weights(array)
    psi = basis.psi(array.positions()[:, 1], n) * w[None, :]
    alpha = survey.amplitudes[:, :n].T  # (n, n_src)
    phase = np.exp(-1j * basis.betas[:n].real * array.x_A)
    U = sensor_gram(array, basis) @ (phase[:, None] * alpha) @ psi.T
    return ResponseMatrix(U, _meta(basis, array, "amplitudes"))


def route_defect(survey, basis):
    """Relative Frobenius gap between the sensor and amplitude routes.

    The sensor route projects the interpolated finite element data, so the
    two routes share no sampling step.
    """
    src = survey if survey.direct is None else survey.with_data("direct")
    a = project_to_modal(src, basis).entries
    b = response_from_modal(survey, basis).entries
    nrm = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if nrm == 0 else float(np.linalg.norm(a - b) / nrm)


def add_noise(matrix, level, seed):
    """Multiply every entry by ``1 + level * delta`` with ``delta ~ U[0, 1]``."""
    if not level >= 0:
        raise InvalidArray(f"noise level must be non-negative, got {level}")
    rng = np.random.default_rng(seed)
    delta = rng.uniform(0.0, 1.0, size=matrix.entries.shape)
    meta = dict(matrix.meta, noise_level=float(level), seed=seed)
    return ResponseMatrix(matrix.entries * (1.0 + level * delta), meta)


# ---------------------------------------------------------------------------
# Response file format
# ---------------------------------------------------------------------------
_HEADER_KEYS = ("k", "width", "x_A", "aperture", "aperture_kind", "J", "noise_level", "seed",
                "route")


def write_response(matrix, path):
    """Text format: ``key = value`` header, then ``DATA`` rows ``j j' re im``."""
    lines = ["# wglsm response matrix"]
    for key in _HEADER_KEYS:
        v = matrix.meta.get(key)
        lines.append(f"{key} = {v!r}" if isinstance(v, float) else f"{key} = {v}")
    lines.append("DATA")
    e = matrix.entries
    for j in range(e.shape[0]):
        for jp in range(e.shape[1]):
            lines.append(f"{j} {jp} {e[j, jp].real:.17g} {e[j, jp].imag:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_value(key, text):
    if text == "None":
        return None
    if key in ("J", "seed"):
        return int(text)
    if key in ("aperture_kind", "route"):
        return text
    return float(text)


def read_response(path, basis=None):
    """Read a matrix written by :func:`write_response`.

    If ``basis`` is given, the header must agree with its wavenumber, width
    and propagating mode count.
    """
    meta, rows = {}, []
    in_data = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line == "DATA":
                in_data = True
                continue
            try:
                if in_data:
                    j, jp, re, im = line.split()
                    rows.append((int(j), int(jp), float(re), float(im)))
                else:
                    key, val = (s.strip() for s in line.split("=", 1))
                    meta[key] = _parse_value(key, val)
            except ValueError as exc:
                raise HeaderMismatch(f"{path}:{lineno}: {exc}") from None
    if "J" not in meta:
        raise HeaderMismatch(f"{path}: header has no J")
    n = meta["J"] + 1
    U = np.zeros((n, n), dtype=complex)
    seen = np.zeros((n, n), dtype=bool)
    for j, jp, re, im in rows:
        if not (0 <= j < n and 0 <= jp < n):
            raise HeaderMismatch(f"{path}: entry ({j}, {jp}) outside a {n}x{n} matrix")
        U[j, jp] = complex(re, im)
        seen[j, jp] = True
    if not seen.all():
        raise HeaderMismatch(f"{path}: {int((~seen).sum())} matrix entries missing")
    if basis is not None:
        if (meta.get("J") != basis.j_prop
                or abs(meta.get("k", np.nan) - basis.wavenumber) > 1e-12 * basis.wavenumber
                or abs(meta.get("width", np.nan) - basis.width) > 1e-12 * basis.width):
            raise HeaderMismatch(f"{path}: header k/width/J disagree with the basis")
    return ResponseMatrix(U, meta)
