"""Both kernel backends compute the same numbers."""

import numpy as np
import pytest

from wglsm import kernels


def _both(fn, *args, **kw):
    out = {}
    old = kernels.get_backend()
    try:
        for name in kernels.available_backends():
            kernels.set_backend(name)
            out[name] = fn(*args, **kw)
    finally:
        kernels.set_backend(old)
    return out


def _assert_same(res, rtol=1e-12, atol=0.0):
    vals = list(res.values())
    for other in vals[1:]:
        for a, b in zip(np.atleast_1d(vals[0]) if not isinstance(vals[0], tuple) else vals[0],
                        other if isinstance(other, tuple) else np.atleast_1d(other)):
            np.testing.assert_allclose(a, b, rtol=rtol, atol=atol)


def test_backend_switch():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")
    assert kernels.get_backend() in kernels.available_backends()


def test_modal_green_backends(basis10, rng):
    pts = np.column_stack([rng.uniform(-3, -0.1, 50), rng.uniform(0, 1, 50)])
    src = np.array([[-4.0, 0.2], [-1.5, 0.7]])
    res = _both(kernels.modal_green, pts, src, basis10.betas, 1.0, grad=True)
    _assert_same(res, rtol=1e-11, atol=1e-14)


def test_p1_stiffness_backends(rng):
    verts = rng.uniform(0, 1, (30, 2))
    tris = np.array([rng.choice(30, 3, replace=False) for _ in range(40)])
    res = _both(kernels.p1_stiffness, verts, tris)
    _assert_same(res, rtol=1e-12, atol=1e-12)
    stiff, area = res["numpy"]
    # rows of a P1 stiffness matrix sum to zero
    np.testing.assert_allclose(stiff.sum(axis=2), 0, atol=1e-9 * np.abs(stiff).max())


def test_p1_stiffness_reference_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    stiff, area = kernels.p1_stiffness(verts, np.array([[0, 1, 2]]))
    assert area[0] == pytest.approx(0.5)
    np.testing.assert_allclose(stiff[0], 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]))


def test_morozov_backends(rng):
    sig = np.sort(rng.uniform(0.01, 1.0, 8))[::-1]
    bh2 = rng.uniform(0, 1, (20, 8))
    bperp2 = rng.uniform(0, 0.1, 20)
    res = _both(kernels.morozov_bisection, sig, bh2, bperp2, 0.05)
    _assert_same(res, rtol=1e-9)


def test_locate_backends(rng):
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    q = np.vstack([rng.uniform(0, 1, (20, 2)), [[2.0, 2.0]]])
    res = _both(kernels.locate_points, q, verts, tris)
    idx = [r[0] for r in res.values()]
    bary = [r[1] for r in res.values()]
    for i, b in zip(idx[1:], bary[1:]):
        np.testing.assert_array_equal(i, idx[0])
        np.testing.assert_allclose(b[:-1], bary[0][:-1], atol=1e-14)
    assert idx[0][-1] == -1 and np.all(idx[0][:-1] >= 0)
    # barycentric weights reproduce the point
    ok = idx[0] >= 0
    rec = np.einsum("ni,nij->nj", bary[0][ok], verts[tris[idx[0][ok]]])
    np.testing.assert_allclose(rec, q[ok], atol=1e-13)


@pytest.mark.parametrize("flag,expect", [("0", "numpy"), ("false", "numpy")])
def test_env_flag_selects_backend(flag, expect):
    import os
    import subprocess
    import sys
    env = dict(os.environ, WGLSM_USE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from wglsm import kernels; "
                          "print(kernels.get_backend())"], env=env, capture_output=True,
                         text=True, check=True).stdout.strip()
    assert out == expect
