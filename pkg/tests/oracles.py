"""Independent reference computations used by the tests."""

import numpy as np


def discrepancy(U, b, eps, alpha):
    """``||U g_a - b||^2 - eps^2 ||g_a||^2`` for an array of ``alpha``."""
    W, s, _ = np.linalg.svd(U)
    bh = np.abs(W.conj().T @ b) ** 2
    perp = max(np.linalg.norm(b) ** 2 - bh.sum(), 0.0)
    a = np.asarray(alpha, dtype=float)[:, None]
    s2 = s[None, :] ** 2
    res2 = np.sum((a / (s2 + a)) ** 2 * bh, axis=1) + perp
    g2 = np.sum(s2 / (s2 + a) ** 2 * bh, axis=1)
    return res2 - eps ** 2 * g2


def grid_scan_alpha(U, b, eps, n=10 ** 6, log_lo=-16.0, log_hi=6.0, chunk=2 * 10 ** 5):
    """Root of the discrepancy function by scanning ``n`` log-spaced values.

    The first sign change is refined by linear interpolation in ``log10``.
    """
    t = np.linspace(log_lo, log_hi, n)
    prev_t = prev_v = None
    for i in range(0, n, chunk):
        tt = t[i:i + chunk]
        v = discrepancy(U, b, eps, 10.0 ** tt)
        if prev_v is not None:
            tt, v = np.concatenate([[prev_t], tt]), np.concatenate([[prev_v], v])
        sc = np.nonzero((v[:-1] < 0) & (v[1:] >= 0))[0]
        if len(sc):
            j = sc[0]
            r = tt[j] - v[j] * (tt[j + 1] - tt[j]) / (v[j + 1] - v[j])
            return 10.0 ** r
        prev_t, prev_v = tt[-1], v[-1]
    return np.nan
