import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wglsm.errors import DimensionMismatch, EmptyResponse, InvalidFraction, ZeroData
from wglsm.fem import simpson_weights
from wglsm.lsm import (SamplingGrid, compute_indicator, effective_rank_index, gram_entries,
                       gram_matrix, morozov_tikhonov_solve, project_partial, prolate_spectrum)
from wglsm.modes import WaveguideSpec, build_mode_basis

from oracles import grid_scan_alpha


@given(st.integers(1, 15), st.floats(0.05, 0.99))
def test_gram_entries_match_quadrature(J, f):
    y = np.linspace(0.0, f, 2001)
    w = simpson_weights(len(y), y[1] - y[0])
    c = np.full(J + 1, np.sqrt(2.0))
    c[0] = 1.0
    psi = c[:, None] * np.cos(np.pi * np.outer(np.arange(J + 1), y))
    np.testing.assert_allclose(gram_entries(J + 1, f), (psi * w) @ psi.T, atol=1e-8)


@given(st.integers(1, 25), st.floats(0.05, 1.0))
def test_gram_spectrum_properties(J, f):
    m = gram_matrix(J, f)
    assert np.allclose(m.gram, m.gram.T)
    assert np.all(m.eigvals >= -1e-12) and np.all(m.eigvals <= 1 + 1e-12)
    assert np.all(np.diff(m.eigvals) <= 1e-12)
    P = m.projector
    np.testing.assert_allclose(P @ P, P, atol=1e-9)
    assert m.j_cut == effective_rank_index(J, f)


@given(st.integers(1, 25), st.floats(0.05, 1.0))
def test_prolate_route_matches_gram(J, f):
    m = gram_matrix(J, f)
    p = prolate_spectrum(J, f)
    np.testing.assert_allclose(p["sigmas"], m.eigvals, atol=1e-8)
    assert p["j_cut"] == m.j_cut


def test_prolate_plateau_reference():
    p = prolate_spectrum(19, 0.6)
    assert p["j_cut"] == 11
    s = p["sigmas"]
    assert np.all(s[:10] >= 0.9) and np.all(s[13:] <= 0.1)
    assert p["orthogonality_full"] < 1e-10
    assert p["orthogonality_aperture"] < 1e-6


def test_full_aperture_is_identity():
    m = gram_matrix(9, 1.0)
    np.testing.assert_array_equal(m.pseudo_inverse, np.eye(10))
    U = np.arange(100.0).reshape(10, 10) + 1j
    Ut, bt = project_partial(U, np.ones(10), m)
    np.testing.assert_array_equal(Ut, U)
    np.testing.assert_array_equal(bt, np.ones(10))


@pytest.mark.parametrize("f", [0.0, -0.1, 1.5, float("nan"), "half"])
def test_invalid_fraction(f):
    with pytest.raises(InvalidFraction):
        gram_matrix(9, f)


def test_project_partial_dimension_checks():
    m = gram_matrix(4, 0.5)
    with pytest.raises(DimensionMismatch):
        project_partial(np.eye(4), np.ones(5), m)
    with pytest.raises(DimensionMismatch):
        project_partial(np.eye(5), np.ones(4), m)


def test_morozov_identity():
    b = np.array([1.0, 2.0, -1.0j])
    r = morozov_tikhonov_solve(np.eye(3), b, 0.01)
    assert r.alpha == pytest.approx(0.01, rel=1e-8)
    np.testing.assert_allclose(r.g, b / 1.01, rtol=1e-8)
    assert not r.no_root


def _instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    U = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    U *= 10.0 ** rng.uniform(-3, 1)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    eps = 10.0 ** rng.uniform(-3, -0.5)
    return U, b, eps


@given(st.integers(0, 2 ** 32 - 1))
def test_morozov_discrepancy_holds(seed):
    U, b, eps = _instance(seed)
    r = morozov_tikhonov_solve(U, b, eps)
    res = np.linalg.norm(U @ r.g - b)
    gn = np.linalg.norm(r.g)
    assert abs(res - eps * gn) <= 1e-6 * eps * gn
    assert r.residual == pytest.approx(res, rel=1e-9)


def test_morozov_against_grid_scan():
    for seed in range(5):
        U, b, eps = _instance(seed)
        a = morozov_tikhonov_solve(U, b, eps).alpha
        assert a == pytest.approx(grid_scan_alpha(U, b, eps, n=2 * 10 ** 5), rel=1e-5)


def test_morozov_errors():
    with pytest.raises(ZeroData):
        morozov_tikhonov_solve(np.eye(2), np.zeros(2))
    with pytest.raises(ZeroData):
        morozov_tikhonov_solve(np.zeros((2, 2)), np.ones(2))
    with pytest.raises(ValueError):
        morozov_tikhonov_solve(np.eye(2), np.ones(2), 1.5)
    with pytest.raises(DimensionMismatch):
        morozov_tikhonov_solve(np.eye(2), np.ones(3))


def test_sampling_grid():
    g = SamplingGrid.from_resolution(-4.0, 0.0, 1.0, 0.1)
    assert (g.nx, g.ny) == (40, 10) and len(g) == 400
    p = g.points()
    assert p[1, 0] > p[0, 0] and p[1, 1] == p[0, 1]
    assert p[g.nx, 1] > p[0, 1]
    assert np.all(p[:, 0] > -4.0) and np.all(p[:, 0] < 0.0)
    with pytest.raises(ValueError):
        SamplingGrid((0.0, -1.0), (0.0, 1.0), 3, 3)


BASIS = build_mode_basis(WaveguideSpec.from_mode_count(6), 20)
GRID = SamplingGrid.from_resolution(-2.0, 0.0, 1.0, 0.1)


def _test_matrix(seed=3):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    return 0.05 * (A + A.T)


def test_indicator_joint_scaling_invariance():
    U = _test_matrix()
    a = compute_indicator(U, GRID, BASIS, -3.0, 0.01)
    b = compute_indicator(37.0 * U, GRID, BASIS, -3.0, 0.01)
    np.testing.assert_allclose(b.values, 37.0 * a.values, rtol=1e-6)
    np.testing.assert_allclose(a.normalized(), b.normalized(), atol=1e-6)


def test_indicator_matches_pointwise_solve():
    U = _test_matrix()
    img = compute_indicator(U, GRID, BASIS, -3.0, 0.01)
    from wglsm.modes import mode_coeff_matrix
    z = GRID.points()[[0, 57, 199]]
    s0 = np.linalg.norm(U, 2)
    for i, zi in zip([0, 57, 199], z):
        b = mode_coeff_matrix(BASIS, zi, -3.0)[0]
        r = morozov_tikhonov_solve(U / s0, b / s0, 0.01)
        # scaling U and b by 1/s0 leaves g unchanged
        assert img.values[i] == pytest.approx(1.0 / r.gnorm, rel=1e-6)


def test_indicator_empty_and_shape():
    with pytest.raises(EmptyResponse):
        compute_indicator(np.zeros((6, 6)), GRID, BASIS, -3.0)
    with pytest.raises(DimensionMismatch):
        compute_indicator(np.eye(5), GRID, BASIS, -3.0)


def test_image_outputs(tmp_path):
    img = compute_indicator(_test_matrix(), GRID, BASIS, -3.0, 0.01)
    n = img.normalized()
    assert np.nanmin(n) == 0.0 and np.nanmax(n) == 1.0
    m = img.mask(0.7)
    assert m.any() and np.all(n[m] >= 0.7)
    s = img.summary(0.7)
    assert s["n_masked"] == int(m.sum()) and s["n_points"] == len(GRID)
    img.write_csv(tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "x,y,indicator,alpha" and len(lines) == len(GRID) + 1
    img.write_pgm(tmp_path / "a.pgm")
    raw = (tmp_path / "a.pgm").read_bytes()
    header = f"P5\n{GRID.nx} {GRID.ny}\n255\n".encode()
    assert raw.startswith(header) and len(raw) == len(header) + len(GRID)


def test_partial_fraction_one_same_image():
    U = _test_matrix()
    m = gram_matrix(BASIS, 1.0)
    Ut, _ = project_partial(U, np.zeros(6), m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = compute_indicator(U, GRID, BASIS, -3.0)
        b = compute_indicator(Ut, GRID, BASIS, -3.0, model=m)
    np.testing.assert_array_equal(a.values, b.values)
