import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wglsm.errors import BasisMismatch, HeaderMismatch, InvalidArray, TooFewSensors
from wglsm.geometry import ScenarioGeometry, bump_polyline
from wglsm.mesh import build_mesh
from wglsm.modes import WaveguideSpec, build_mode_basis
from wglsm.survey import (ArraySpec, ResponseMatrix, SurveyData, add_noise,
                          default_sensor_spacing, project_to_modal, read_response,
                          response_from_modal, route_defect, run_survey, sensor_gram,
                          write_response)

SPEC = WaveguideSpec.from_mode_count(4)
BASIS = build_mode_basis(SPEC, 16)


@pytest.mark.parametrize("m,n_sensors", [(4, 27), (10, 27), (20, 41), (50, 101)])
def test_default_sensor_count(m, n_sensors):
    basis = build_mode_basis(WaveguideSpec.from_mode_count(m), m + 4)
    arr = ArraySpec.default(basis, -5.0)
    assert arr.n_sensors == n_sensors and arr.n_sensors % 2 == 1
    assert default_sensor_spacing(basis) * (n_sensors - 1) == pytest.approx(1.0)


def test_array_checks():
    geo = ScenarioGeometry(SPEC, x_star=-1.0, x_L=-2.5)
    with pytest.raises(InvalidArray):
        ArraySpec(-2.0, 1.0, 0.3).check(BASIS)
    with pytest.raises(TooFewSensors):
        ArraySpec(-2.0, 0.05, 0.04).check(BASIS)
    with pytest.raises(InvalidArray):
        ArraySpec(-0.5, 1.0, 0.05).check(BASIS, geo)
    with pytest.raises(InvalidArray):
        ArraySpec(-2.0, 1.5, 0.05)
    arr = ArraySpec(-2.0, 0.6, 0.05)
    assert arr.n_sensors == 13 and not arr.is_full
    assert arr.positions()[-1, 1] == pytest.approx(0.6)


def test_sensor_gram_near_identity():
    arr = ArraySpec.default(BASIS, -2.0)
    G = sensor_gram(arr, BASIS)
    assert np.abs(G - np.eye(BASIS.n_prop)).max() < 1e-3


def _random_matrix(rng, n=4):
    return ResponseMatrix(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)),
                          {"k": SPEC.wavenumber, "width": 1.0, "x_A": -2.0, "aperture": 1.0,
                           "aperture_kind": "full", "J": n - 1, "noise_level": 0.0,
                           "seed": None, "route": "sensors"})


def test_noise_model(rng):
    U = _random_matrix(rng)
    a, b = add_noise(U, 0.02, 7), add_noise(U, 0.02, 7)
    np.testing.assert_array_equal(a.entries, b.entries)
    ratio = np.abs(a.entries) / np.abs(U.entries)
    assert np.all(ratio >= 1.0) and np.all(ratio <= 1.02)
    np.testing.assert_array_equal(add_noise(U, 0.0, 3).entries, U.entries)
    assert a.meta["noise_level"] == 0.02 and a.meta["seed"] == 7
    with pytest.raises(InvalidArray):
        add_noise(U, -0.1, 1)


@given(st.integers(1, 6), st.integers(0, 2 ** 31))
def test_response_file_roundtrip(n, seed):
    import tempfile
    U = _random_matrix(np.random.default_rng(seed), n)
    with tempfile.TemporaryDirectory() as d:
        write_response(U, f"{d}/u.txt")
        back = read_response(f"{d}/u.txt")
    np.testing.assert_array_equal(back.entries, U.entries)
    assert back.meta == U.meta


def test_response_file_errors(tmp_path, rng):
    U = _random_matrix(rng)
    p = tmp_path / "u.txt"
    write_response(U, p)
    basis10 = build_mode_basis(WaveguideSpec.from_mode_count(10), 20)
    with pytest.raises(HeaderMismatch):
        read_response(p, basis10)
    lines = p.read_text().splitlines()
    (tmp_path / "short.txt").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(HeaderMismatch, match="missing"):
        read_response(tmp_path / "short.txt")
    (tmp_path / "bad.txt").write_text("\n".join(lines[:-1] + ["3 3 x y"]) + "\n")
    with pytest.raises(HeaderMismatch, match="bad.txt:"):
        read_response(tmp_path / "bad.txt")


@pytest.fixture(scope="module")
def small_survey():
    geo = ScenarioGeometry(SPEC, (bump_polyline(-0.5, 0.5, 0.2),), x_star=-1.0, x_L=-3.0)
    mesh = build_mesh(geo, SPEC.wavelength / 20)
    arr = ArraySpec.default(BASIS, -2.0)
    return geo, run_survey(geo, BASIS, arr, mesh)


def test_survey_reciprocity_and_routes(small_survey):
    _, sv = small_survey
    U = project_to_modal(sv, BASIS)
    assert U.n_modes == BASIS.n_prop
    assert np.abs(U.entries).max() > 0
    assert U.symmetry_defect() < 2e-2
    assert route_defect(sv, BASIS) < 1e-2
    assert U.meta["aperture_kind"] == "full" and U.meta["J"] == BASIS.j_prop


def test_partial_aperture_routes_agree(small_survey):
    _, sv = small_survey
    sub = sv.restrict(0.6 * sv.array.width)
    assert sub.array.n_sensors == 16  # even count: closed with a 3/8 panel
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert route_defect(sub, BASIS) < 1e-2
        UA = project_to_modal(sub, BASIS)
    assert UA.meta["aperture_kind"] == "partial"
    np.testing.assert_array_equal(sub.data, sv.data[: sub.array.n_sensors, : sub.array.n_sensors])


def test_direct_sampling_matches_modal(small_survey):
    geo, sv = small_survey
    mesh = build_mesh(geo, SPEC.wavelength / 20)
    dv = run_survey(geo, BASIS, sv.array, mesh, sampling="direct")
    np.testing.assert_allclose(dv.data, sv.direct)
    a = project_to_modal(sv, BASIS).entries
    b = project_to_modal(dv, BASIS).entries
    assert np.linalg.norm(a - b) < 1e-2 * np.linalg.norm(a)


def test_survey_data_shape_checked():
    arr = ArraySpec(-2.0, 1.0, 0.25)
    with pytest.raises(InvalidArray):
        SurveyData(arr, np.zeros((3, 3)))
    with pytest.raises(InvalidArray):
        SurveyData(arr, np.zeros((5, 5))).restrict(2.0)
    with pytest.raises(BasisMismatch):
        response_from_modal(SurveyData(arr, np.zeros((5, 5))), BASIS)
