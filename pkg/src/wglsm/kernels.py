"""Hot numerical kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import from the ``WGLSM_USE_NUMBA``
environment variable (``1`` by default, ``0`` forces numpy). When numba is
not importable the numpy path is used regardless. ``set_backend`` switches
at runtime, which the tests and the benchmark rely on.

Every public kernel here has the same signature in both backends and
returns freshly allocated arrays.
"""

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

try:
    import numba

    _HAVE_NUMBA = True
    logging.getLogger("numba").setLevel(logging.WARNING)
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    _HAVE_NUMBA = False


def _env_wants_numba():
    flag = os.environ.get("WGLSM_USE_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


_BACKEND = "numba" if (_HAVE_NUMBA and _env_wants_numba()) else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def available_backends():
    return ("numpy", "numba") if _HAVE_NUMBA else ("numpy",)


def get_backend():
    return _BACKEND


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` for subsequent kernel calls."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _BACKEND = name


# ---------------------------------------------------------------------------
# Modal Green's function of the terminating waveguide
# ---------------------------------------------------------------------------
def _mode_norms(n, width):
    c = np.full(n, np.sqrt(2.0 / width))
    c[0] = 1.0 / np.sqrt(width)
    return c


def _green_numpy(px, py, sx, sy, betas, width, grad):
    nm = betas.shape[0]
    ns = sx.shape[0]
    npts = px.shape[0]
    norms = _mode_norms(nm, width)
    q = np.pi * np.arange(nm) / width
    g = np.zeros((ns, npts), dtype=np.complex128)
    gx = np.zeros((ns, npts), dtype=np.complex128)
    gy = np.zeros((ns, npts), dtype=np.complex128)
    psi_p = norms * np.cos(np.outer(py, q))  # (npts, nm)
    dpsi_p = -norms * q * np.sin(np.outer(py, q))
    for s in range(ns):
        amp = 0.5j / betas * norms * np.cos(q * sy[s])  # (nm,)
        d1 = px - sx[s]
        d2 = px + sx[s]
        e1 = np.exp(1j * np.outer(np.abs(d1), betas))
        e2 = np.exp(1j * np.outer(np.abs(d2), betas))
        g[s] = (psi_p * (e1 + e2)) @ amp
        if grad:
            ib = 1j * betas
            sx1 = np.sign(d1)[:, None]
            sx2 = np.sign(d2)[:, None]
            gx[s] = (psi_p * ib * (sx1 * e1 + sx2 * e2)) @ amp
            gy[s] = (dpsi_p * (e1 + e2)) @ amp
    return g, gx, gy


@njit
def _green_numba_impl(px, py, sx, sy, betas, width, grad, g, gx, gy):
    nm = betas.shape[0]
    ns = sx.shape[0]
    npts = px.shape[0]
    c0 = 1.0 / np.sqrt(width)
    c1 = np.sqrt(2.0 / width)
    for s in range(ns):
        for p in range(npts):
            d1 = px[p] - sx[s]
            d2 = px[p] + sx[s]
            a1 = abs(d1)
            a2 = abs(d2)
            s1 = 1.0 if d1 > 0 else (-1.0 if d1 < 0 else 0.0)
            s2 = 1.0 if d2 > 0 else (-1.0 if d2 < 0 else 0.0)
            acc = 0j
            accx = 0j
            accy = 0j
            for j in range(nm):
                cj = c0 if j == 0 else c1
                q = np.pi * j / width
                amp = 0.5j / betas[j] * cj * np.cos(q * sy[s])
                psi = cj * np.cos(q * py[p])
                e1 = np.exp(1j * betas[j] * a1)
                e2 = np.exp(1j * betas[j] * a2)
                acc += amp * psi * (e1 + e2)
                if grad:
                    accx += amp * psi * 1j * betas[j] * (s1 * e1 + s2 * e2)
                    accy += amp * (-cj * q * np.sin(q * py[p])) * (e1 + e2)
            g[s, p] = acc
            gx[s, p] = accx
            gy[s, p] = accy


def _green_numba(px, py, sx, sy, betas, width, grad):
    ns, npts = sx.shape[0], px.shape[0]
    g = np.zeros((ns, npts), dtype=np.complex128)
    gx = np.zeros_like(g)
    gy = np.zeros_like(g)
    _green_numba_impl(px, py, sx, sy, betas, float(width), bool(grad), g, gx, gy)
    return g, gx, gy


def modal_green(points, sources, betas, width, grad=False):
    """Truncated modal sum for the terminating-waveguide Green's function.

    Parameters
    ----------
    points : ndarray, shape (n, 2)
        Field points ``(range, cross_range)``.
    sources : ndarray, shape (m, 2)
        Source points.
    betas : ndarray of complex, shape (n_modes,)
        Mode wavenumbers, evanescent ones with positive imaginary part.
    width : float
        Cross-section length.
    grad : bool
        Also return the gradient with respect to the field point.

    Returns
    -------
    g : ndarray, shape (m, n)
        Green's function values; if ``grad`` also ``(gx, gy)``.
    """
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    sources = np.ascontiguousarray(sources, dtype=np.float64).reshape(-1, 2)
    betas = np.ascontiguousarray(betas, dtype=np.complex128)
    args = (points[:, 0].copy(), points[:, 1].copy(), sources[:, 0].copy(),
            sources[:, 1].copy(), betas, float(width), grad)
    if _BACKEND == "numba":
        g, gx, gy = _green_numba(*args)
    else:
        g, gx, gy = _green_numpy(*args)
    if grad:
        return g, gx, gy
    return g


# ---------------------------------------------------------------------------
# P1 element matrices
# ---------------------------------------------------------------------------
def _p1_numpy(verts, tris):
    x = verts[tris]  # (nt, 3, 2)
    b = np.stack([x[:, 1, 1] - x[:, 2, 1], x[:, 2, 1] - x[:, 0, 1],
                  x[:, 0, 1] - x[:, 1, 1]], axis=1)
    c = np.stack([x[:, 2, 0] - x[:, 1, 0], x[:, 0, 0] - x[:, 2, 0],
                  x[:, 1, 0] - x[:, 0, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    stiff = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (
        4.0 * area[:, None, None])
    return stiff, area


@njit
def _p1_numba_impl(verts, tris, stiff, area):
    nt = tris.shape[0]
    b = np.empty(3)
    c = np.empty(3)
    for t in range(nt):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        b[0] = verts[i1, 1] - verts[i2, 1]
        b[1] = verts[i2, 1] - verts[i0, 1]
        b[2] = verts[i0, 1] - verts[i1, 1]
        c[0] = verts[i2, 0] - verts[i1, 0]
        c[1] = verts[i0, 0] - verts[i2, 0]
        c[2] = verts[i1, 0] - verts[i0, 0]
        a = 0.5 * (b[0] * c[1] - b[1] * c[0])
        area[t] = a
        for i in range(3):
            for j in range(3):
                stiff[t, i, j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * a)


def _p1_numba(verts, tris):
    nt = tris.shape[0]
    stiff = np.empty((nt, 3, 3))
    area = np.empty(nt)
    _p1_numba_impl(verts, tris, stiff, area)
    return stiff, area


def p1_stiffness(verts, tris):
    """Element stiffness matrices and signed areas for linear triangles.

    Returns ``(stiff, area)`` with ``stiff`` of shape ``(nt, 3, 3)``.
    """
    verts = np.ascontiguousarray(verts, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    if _BACKEND == "numba":
        return _p1_numba(verts, tris)
    return _p1_numpy(verts, tris)


# ---------------------------------------------------------------------------
# Morozov discrepancy root, one bisection per right-hand side
# ---------------------------------------------------------------------------
def _phi_numpy(t, sig2, sig, bh2, bperp2, eps):
    alpha = 10.0 ** t
    den = sig2[None, :] + alpha[:, None]
    res2 = np.sum((alpha[:, None] / den) ** 2 * bh2, axis=1) + bperp2
    gn2 = np.sum((sig[None, :] / den) ** 2 * bh2, axis=1)
    return np.sqrt(res2) - eps * np.sqrt(gn2), np.sqrt(gn2), np.sqrt(res2)


def _morozov_numpy(sig, bh2, bperp2, eps, lo, hi, maxit, rtol):
    npts = bh2.shape[0]
    sig2 = sig * sig
    a = np.full(npts, lo)
    b = np.full(npts, hi)
    flag = np.zeros(npts, dtype=np.int8)
    fa, _, _ = _phi_numpy(a, sig2, sig, bh2, bperp2, eps)
    fb, _, _ = _phi_numpy(b, sig2, sig, bh2, bperp2, eps)
    flag[fa > 0] = 1
    flag[(fb < 0) & (flag == 0)] = 2
    t = np.where(flag == 1, lo, np.where(flag == 2, hi, 0.5 * (lo + hi)))
    active = flag == 0
    for _ in range(maxit):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        mid = 0.5 * (a[idx] + b[idx])
        f, gn, _ = _phi_numpy(mid, sig2, sig, bh2[idx], bperp2[idx], eps)
        t[idx] = mid
        done = (np.abs(f) <= rtol * eps * gn) | (mid == a[idx]) | (mid == b[idx])
        pos = f > 0
        b[idx[pos]] = mid[pos]
        a[idx[~pos]] = mid[~pos]
        active[idx[done]] = False
    _, gn, res = _phi_numpy(t, sig2, sig, bh2, bperp2, eps)
    return 10.0 ** t, gn, res, flag


@njit
def _phi_point(t, sig, bh2, bperp2, eps):
    alpha = 10.0 ** t
    res2 = bperp2
    gn2 = 0.0
    for i in range(sig.shape[0]):
        den = sig[i] * sig[i] + alpha
        res2 += (alpha / den) ** 2 * bh2[i]
        gn2 += (sig[i] / den) ** 2 * bh2[i]
    return np.sqrt(res2) - eps * np.sqrt(gn2), np.sqrt(gn2), np.sqrt(res2)


@njit
def _morozov_numba_impl(sig, bh2, bperp2, eps, lo, hi, maxit, rtol, alpha, gn, res, flag):
    for p in range(bh2.shape[0]):
        fa, _, _ = _phi_point(lo, sig, bh2[p], bperp2[p], eps)
        fb, _, _ = _phi_point(hi, sig, bh2[p], bperp2[p], eps)
        if fa > 0:
            flag[p] = 1
            t = lo
        elif fb < 0:
            flag[p] = 2
            t = hi
        else:
            a = lo
            b = hi
            t = 0.5 * (lo + hi)
            for _ in range(maxit):
                t = 0.5 * (a + b)
                f, g, _ = _phi_point(t, sig, bh2[p], bperp2[p], eps)
                if abs(f) <= rtol * eps * g or t == a or t == b:
                    break
                if f > 0:
                    b = t
                else:
                    a = t
        _, g, r = _phi_point(t, sig, bh2[p], bperp2[p], eps)
        alpha[p] = 10.0 ** t
        gn[p] = g
        res[p] = r


def _morozov_numba(sig, bh2, bperp2, eps, lo, hi, maxit, rtol):
    npts = bh2.shape[0]
    alpha = np.empty(npts)
    gn = np.empty(npts)
    res = np.empty(npts)
    flag = np.zeros(npts, dtype=np.int8)
    _morozov_numba_impl(sig, bh2, bperp2, float(eps), float(lo), float(hi),
                        int(maxit), float(rtol), alpha, gn, res, flag)
    return alpha, gn, res, flag


def morozov_bisection(sig, bhat_abs2, bperp2, eps, log_lo=-16.0, log_hi=6.0,
                      maxit=200, rtol=1e-9):
    """Solve the discrepancy equation for many right-hand sides.

    For each row of ``bhat_abs2`` (squared moduli of the data in the left
    singular basis) find ``alpha`` with ``||U g - b|| = eps ||g||`` by
    bisection on ``log10(alpha)``.

    Returns
    -------
    alpha, gnorm, resid : ndarray
        Parameter, solution norm and residual norm per right-hand side.
    flag : ndarray of int8
        0 converged, 1 no root because even ``10**log_lo`` over-regularizes,
        2 no root inside the bracket on the upper side.
    """
    sig = np.ascontiguousarray(sig, dtype=np.float64)
    bh2 = np.ascontiguousarray(np.atleast_2d(bhat_abs2), dtype=np.float64)
    bperp2 = np.ascontiguousarray(np.atleast_1d(bperp2), dtype=np.float64)
    fn = _morozov_numba if _BACKEND == "numba" else _morozov_numpy
    return fn(sig, bh2, bperp2, eps, log_lo, log_hi, maxit, rtol)


# ---------------------------------------------------------------------------
# Point location by barycentric coordinates
# ---------------------------------------------------------------------------
_LOCATE_TOL = 1e-10


def _locate_numpy(qx, qy, verts, tris):
    nq = qx.shape[0]
    chunk = max(1, 4_000_000 // max(1, tris.shape[0]))
    tri_idx = np.full(nq, -1, dtype=np.int64)
    bary = np.zeros((nq, 3))
    x0 = verts[tris[:, 0]]
    x1 = verts[tris[:, 1]]
    x2 = verts[tris[:, 2]]
    det = (x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1]) - (x2[:, 0] - x0[:, 0]) * (
        x1[:, 1] - x0[:, 1])
    for start in range(0, nq, chunk):
        sl = slice(start, min(start + chunk, nq))
        dx = qx[sl, None] - x0[None, :, 0]
        dy = qy[sl, None] - x0[None, :, 1]
        l1 = (dx * (x2[:, 1] - x0[:, 1]) - dy * (x2[:, 0] - x0[:, 0])) / det
        l2 = ((x1[:, 0] - x0[:, 0]) * dy - (x1[:, 1] - x0[:, 1]) * dx) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -_LOCATE_TOL) & (l1 >= -_LOCATE_TOL) & (l2 >= -_LOCATE_TOL)
        hit = inside.any(axis=1)
        first = np.argmax(inside, axis=1)
        rows = np.nonzero(hit)[0]
        cols = first[rows]
        tri_idx[start + rows] = cols
        bary[start + rows, 0] = l0[rows, cols]
        bary[start + rows, 1] = l1[rows, cols]
        bary[start + rows, 2] = l2[rows, cols]
    return tri_idx, bary


@njit
def _locate_numba_impl(qx, qy, verts, tris, tol, tri_idx, bary):
    for q in range(qx.shape[0]):
        for t in range(tris.shape[0]):
            i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
            ax, ay = verts[i0, 0], verts[i0, 1]
            e1x, e1y = verts[i1, 0] - ax, verts[i1, 1] - ay
            e2x, e2y = verts[i2, 0] - ax, verts[i2, 1] - ay
            det = e1x * e2y - e2x * e1y
            dx = qx[q] - ax
            dy = qy[q] - ay
            l1 = (dx * e2y - dy * e2x) / det
            if l1 < -tol:
                continue
            l2 = (e1x * dy - e1y * dx) / det
            if l2 < -tol:
                continue
            l0 = 1.0 - l1 - l2
            if l0 < -tol:
                continue
            tri_idx[q] = t
            bary[q, 0] = l0
            bary[q, 1] = l1
            bary[q, 2] = l2
            break


def _locate_numba(qx, qy, verts, tris):
    nq = qx.shape[0]
    tri_idx = np.full(nq, -1, dtype=np.int64)
    bary = np.zeros((nq, 3))
    _locate_numba_impl(qx, qy, verts, tris, _LOCATE_TOL, tri_idx, bary)
    return tri_idx, bary


def locate_points(points, verts, tris):
    """Find the containing triangle and barycentric weights of each point.

    Triangles whose bounding box misses the bounding box of the query set are
    discarded up front, which keeps line-shaped query sets (cross sections,
    sensor rows) cheap. Points outside the mesh get triangle index ``-1``.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    verts = np.ascontiguousarray(verts, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    pad = 1e-9 * max(1.0, float(np.ptp(verts[:, 0])), float(np.ptp(verts[:, 1])))
    tx = verts[tris, 0]
    ty = verts[tris, 1]
    keep = ((tx.max(axis=1) >= points[:, 0].min() - pad)
            & (tx.min(axis=1) <= points[:, 0].max() + pad)
            & (ty.max(axis=1) >= points[:, 1].min() - pad)
            & (ty.min(axis=1) <= points[:, 1].max() + pad))
    cand = np.nonzero(keep)[0]
    sub = np.ascontiguousarray(tris[cand])
    qx = np.ascontiguousarray(points[:, 0])
    qy = np.ascontiguousarray(points[:, 1])
    if _BACKEND == "numba":
        idx, bary = _locate_numba(qx, qy, verts, sub)
    else:
        idx, bary = _locate_numpy(qx, qy, verts, sub)
    found = idx >= 0
    out = np.full(idx.shape, -1, dtype=np.int64)
    out[found] = cand[idx[found]]
    return out, bary
