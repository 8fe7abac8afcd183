"""Pure numpy implementation of the hot kernels.

Used when the compiled extension ``_core`` is unavailable, or when the
environment variable ``PDMPJUMP_PURE_PYTHON`` is set.  Both backends expose
the same four functions with the same semantics.
"""

import math

import numpy as np


def tcp_chain(z0, kappa, e):
    """TCP embedded chain driven by standard exponential draws ``e``.

    Returns ``(z, z_minus, s)`` with ``len(z) == len(e) + 1``.
    """
    e = np.asarray(e, dtype=float)
    n = e.shape[0]
    z = np.empty(n + 1)
    zm = np.empty(n)
    s = np.empty(n)
    cur = float(z0)
    z[0] = cur
    for k in range(n):
        ek = e[k]
        # root of cur*t + t^2/2 = ek written without cancellation
        t = 2.0 * ek / (cur + math.sqrt(cur * cur + 2.0 * ek))
        s[k] = t
        pre = cur + t
        zm[k] = pre
        cur = kappa * pre
        z[k + 1] = cur
    return z, zm, s


def _epan(u):
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def epan_sums(sorted_x, centers, h):
    """``sum_i K((x_i - c) / h) / h`` for every center ``c``."""
    sorted_x = np.asarray(sorted_x, dtype=float)
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    out = np.empty(centers.shape[0])
    lo = np.searchsorted(sorted_x, centers - h, side="right")
    hi = np.searchsorted(sorted_x, centers + h, side="left")
    for j in range(centers.shape[0]):
        u = (sorted_x[lo[j] : hi[j]] - centers[j]) / h
        out[j] = np.sum(0.75 * (1.0 - u * u)) / h
    return out


def lcp_sums(z_sorted, s_by_z, xi, t, hs, hts):
    """Numerators (one per time bandwidth) and shared denominator of the
    conditional estimator of ``lambda(Phi(t | xi))``, without the ``1/n``."""
    hts = np.atleast_1d(np.asarray(hts, dtype=float))
    lo = np.searchsorted(z_sorted, xi - hs, side="right")
    hi = np.searchsorted(z_sorted, xi + hs, side="left")
    u = (z_sorted[lo:hi] - xi) / hs
    w = 0.75 * (1.0 - u * u) / hs
    sw = s_by_z[lo:hi]
    den = float(np.sum(w[sw > t]))
    v = (sw[None, :] - t) / hts[:, None]
    num = np.sum(w[None, :] * _epan(v), axis=1) / hts
    return num, den


def amg_criterion(z_sorted, s_by_z, x_values, xi_grid, hs):
    """Table ``crit[j, m] = sum_i K_hs(Z_i - xi_m) 1{S_i > x_j - xi_m}``.

    ``x_values`` must be increasing.  Entries with ``xi_m > x_j`` are
    meaningless (outside the reachable set) and left as computed; callers mask
    them.
    """
    x_values = np.asarray(x_values, dtype=float)
    xi_grid = np.asarray(xi_grid, dtype=float)
    nx = x_values.shape[0]
    crit = np.zeros((nx, xi_grid.shape[0]))
    lo = np.searchsorted(z_sorted, xi_grid - hs, side="right")
    hi = np.searchsorted(z_sorted, xi_grid + hs, side="left")
    for m in range(xi_grid.shape[0]):
        if hi[m] <= lo[m]:
            continue
        xi = xi_grid[m]
        u = (z_sorted[lo[m] : hi[m]] - xi) / hs
        w = 0.75 * (1.0 - u * u) / hs
        # number of thresholds x_j - xi strictly below each S_i
        idx = np.searchsorted(x_values - xi, s_by_z[lo[m] : hi[m]], side="left")
        hist = np.bincount(idx, weights=w, minlength=nx + 1)
        crit[:, m] = np.cumsum(hist[::-1])[::-1][1:]
    return crit
