"""End-to-end drivers shared by the CLI and the test-suite.

:func:`simulate` turns a scenario into a (noisy) response matrix and
:func:`reconstruct` turns a response matrix into an indicator image.
:func:`image_metrics` scores an image against the known geometry.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
import shapely

from .errors import InvalidFraction
from .fem import HelmholtzProblem
from .lsm import compute_indicator, gram_matrix, project_partial
from .mesh import build_mesh
from .survey import add_noise, project_to_modal, run_survey

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    config: object
    basis: object
    geometry: object
    survey: object
    clean: object
    noisy: object


def survey_scenario(cfg, workers=1, full_aperture=False):
    """Mesh, factorize and survey a scenario.

    With ``full_aperture`` the whole cross-section is surveyed regardless of
    ``cfg.fraction``; partial apertures can then be cut out with
    :meth:`SurveyData.restrict`.
    """
    basis = cfg.basis()
    geo = cfg.geometry()
    array = cfg.full_array(basis) if full_aperture else cfg.array(basis)
    array.check(basis, geo)
    t0 = time.perf_counter()
    mesh = build_mesh(geo, cfg.h_target())
    logger.info("mesh: %d vertices, %d triangles in %.2fs", mesh.n_vertices, mesh.n_triangles,
                time.perf_counter() - t0)
    problem = HelmholtzProblem(geo, basis, mesh, mass_blend=cfg.mass_blend)
    try:
        survey = run_survey(geo, basis, array, mesh, sampling=cfg.sampling, problem=problem,
                            workers=workers)
    finally:
        problem.release()
    return basis, geo, survey


def simulate(cfg, workers=1):
    """Survey ``cfg`` and return clean and noisy modal response matrices."""
    basis, geo, survey = survey_scenario(cfg, workers)
    clean = project_to_modal(survey, basis)
    noisy = add_noise(clean, cfg.noise, cfg.seed)
    return SimulationResult(cfg, basis, geo, survey, clean, noisy)


def aperture_model_for(matrix, basis, pipeline="auto"):
    """Aperture model implied by a response header, or None for full aperture."""
    meta = matrix.meta
    fraction = float(meta.get("aperture", basis.width)) / basis.width
    kind = meta.get("aperture_kind", "full")
    if pipeline == "full" or (pipeline == "auto" and kind == "full"):
        return None
    if pipeline not in ("auto", "partial"):
        raise ValueError(f"unknown pipeline {pipeline!r}")
    if not 0 < fraction <= 1 + 1e-12:
        raise InvalidFraction(f"header aperture gives fraction {fraction}")
    return gram_matrix(basis, min(fraction, 1.0))


def reconstruct(matrix, basis, grid, eps, x_A=None, pipeline="auto"):
    """Indicator image of a response matrix.

    Parameters
    ----------
    matrix : ResponseMatrix
        Full- or partial-aperture response; the header decides the route
        unless ``pipeline`` forces one.
    x_A : float, optional
        Array range; taken from the header when omitted.
    """
    x_A = float(matrix.meta["x_A"]) if x_A is None else float(x_A)
    model = aperture_model_for(matrix, basis, pipeline)
    U = matrix.entries
    if model is not None:
        U, _ = project_partial(U, np.zeros(basis.n_prop), model)
    return compute_indicator(U, grid, basis, x_A, eps, model=model)


def image_metrics(image, geometry, threshold):
    """Contrast and localisation scores of an image against the true supports.

    Returns a dict with
    ``contrast`` : mean normalized log-indicator inside the supports minus
    the mean over points farther than one wavelength from them,
    ``centroid_distance`` : distance from the mask centroid to the centroid
    of the supports, and ``nearest_mask_distance`` : per support polygon,
    the distance from the polygon to the closest masked point.
    """
    pts = image.grid.points()
    lam = geometry.spec.wavelength
    polys = geometry.support_polygons()
    union = shapely.union_all(polys)
    norm = image.normalized()
    inside = shapely.contains_xy(union, pts[:, 0], pts[:, 1])
    far = shapely.distance(shapely.points(pts), union) > lam
    out = {"wavelength": lam}
    out["contrast"] = float(np.nanmean(norm[inside]) - np.nanmean(norm[far])) \
        if inside.any() and far.any() else float("nan")
    mask = image.mask(threshold)
    if mask.any():
        c = pts[mask].mean(axis=0)
        t = np.asarray(union.centroid.coords[0])
        out["centroid_distance"] = float(np.hypot(*(c - t)))
        mp = shapely.points(pts[mask])
        out["nearest_mask_distance"] = [float(shapely.distance(mp, p).min()) for p in polys]
    else:
        out["centroid_distance"] = float("nan")
        out["nearest_mask_distance"] = [float("nan")] * len(polys)
    return out
