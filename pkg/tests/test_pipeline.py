import warnings

import numpy as np
import pytest

from wglsm.pipeline import aperture_model_for, image_metrics, reconstruct
from wglsm.survey import add_noise, project_to_modal

pytestmark = pytest.mark.slow


def _noisy(cfg, basis, sv):
    return add_noise(project_to_modal(sv, basis), cfg.noise, cfg.seed)


def test_bump_mask_inside_perturbation_strip(survey_bump10):
    cfg, basis, geo, sv = survey_bump10
    img = reconstruct(_noisy(cfg, basis, sv), basis, cfg.grid(), cfg.eps)
    s = img.summary(cfg.threshold)
    assert s["n_masked"] > 0 and s["n_failed"] == 0
    x0, y0, x1, y1 = s["mask_bbox"]
    assert geo.x_star < x0 <= x1 < 0.0 and 0.0 <= y0 <= y1 <= 1.0


def test_header_selects_partial_route(survey_bump20):
    cfg, basis, geo, sv = survey_bump20
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        UA = project_to_modal(sv.restrict(0.6), basis)
    model = aperture_model_for(UA, basis)
    assert model is not None and model.j_cut == 11
    assert aperture_model_for(UA, basis, "full") is None
    assert aperture_model_for(project_to_modal(sv, basis), basis) is None


def test_penetrable_disk_detected(survey_pen20):
    cfg, basis, geo, sv = survey_pen20
    img = reconstruct(_noisy(cfg, basis, sv), basis, cfg.grid(), cfg.eps)
    m = image_metrics(img, geo, cfg.threshold)
    lam = m["wavelength"]
    assert m["contrast"] >= 0.2
    # the mask reaches both the bump and the disk
    assert max(m["nearest_mask_distance"]) <= lam / 2
