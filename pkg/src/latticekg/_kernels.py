"""Compiled inner loops: Sturm counts, eigenvalue bisection, cocycle iteration.

Everything here works on plain float64 arrays; all physics-facing logic lives
in the calling modules.  The off-diagonal of every tridiagonal matrix in this
package is identically -1, so e^2 = 1 throughout the Sturm recurrences.
"""

import math

import numpy as np
from numba import njit, prange

# Smallest pivot magnitude admitted in the Sturm recurrence before it is
# replaced by a signed floor (the standard bisection guard).
_PIVMIN = 1e-290


@njit(cache=True)
def sturm_count(diag, x):
    """Number of eigenvalues of tridiag(diag, e=-1) strictly below x."""
    count = 0
    q = diag[0] - x
    if abs(q) < _PIVMIN:
        q = -_PIVMIN
    if q < 0.0:
        count += 1
    for i in range(1, diag.shape[0]):
        q = diag[i] - x - 1.0 / q
        if abs(q) < _PIVMIN:
            q = -_PIVMIN
        if q < 0.0:
            count += 1
    return count


@njit(cache=True, nogil=True)
def sturm_counts(diag, xs):
    """Vector version of sturm_count over an array of shifts."""
    out = np.empty(xs.shape[0], dtype=np.int64)
    for j in range(xs.shape[0]):
        out[j] = sturm_count(diag, xs[j])
    return out


@njit(cache=True, parallel=True)
def bisect_eigenvalues(diag, tol):
    """All eigenvalues of tridiag(diag, e=-1), ascending, by Sturm bisection.

    Each eigenvalue is bracketed independently to absolute width <= tol inside
    the Gershgorin interval; the per-index bisections are embarrassingly
    parallel and write disjoint slots, so the result does not depend on the
    thread schedule.
    """
    m = diag.shape[0]
    glo = diag[0]
    ghi = diag[0]
    for i in range(m):
        if diag[i] < glo:
            glo = diag[i]
        if diag[i] > ghi:
            ghi = diag[i]
    glo -= 2.0 + tol
    ghi += 2.0 + tol
    w = np.empty(m, dtype=np.float64)
    for j in prange(m):
        lo = glo
        hi = ghi
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if sturm_count(diag, mid) > j:
                hi = mid
            else:
                lo = mid
        w[j] = 0.5 * (lo + hi)
    return w


@njit(cache=True, nogil=True)
def cocycle_accumulate(c):
    """Iterate the Schroedinger cocycle v -> ((c_n x - y), x) over the samples c.

    Tracks the continuous lift of the projective angle and the renormalized
    log-norm sum.  The per-step angle increment is atan2(cross, dot) taken on
    the branch (-pi/2, 3pi/2]; on the spectrum increments fall in (0, pi), and
    the branch stays continuous through the hyperbolic regime above the
    spectrum where each step winds by ~pi.

    Returns (dphi_total, dphi_first_half, lognorm_total, lognorm_first_half).
    """
    n = c.shape[0]
    half = n // 2
    x = 1.0
    y = 0.0
    dphi = 0.0
    lognorm = 0.0
    dphi_half = 0.0
    lognorm_half = 0.0
    for i in range(n):
        xp = c[i] * x - y
        yp = x
        cross = x * x + y * y - c[i] * x * y
        dot = c[i] * x * x
        delta = math.atan2(cross, dot)
        if delta <= -0.5 * math.pi:
            delta += 2.0 * math.pi
        dphi += delta
        norm = math.hypot(xp, yp)
        lognorm += math.log(norm)
        x = xp / norm
        y = yp / norm
        if i + 1 == half:
            dphi_half = dphi
            lognorm_half = lognorm
    return dphi, dphi_half, lognorm, lognorm_half
