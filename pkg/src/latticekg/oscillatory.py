"""Free-lattice dispersion analysis and the oscillatory-integral kernel oracle.

The free Klein-Gordon dispersion relation on Z is

    W(rho) = sqrt(2 + m^2 - 2 cos rho),   rho in [0, pi],

whose inflection point produces the t^(-1/3) Airy-type decay.  free_kernel
evaluates the propagator kernel by panelized Gauss-Legendre quadrature and is
the independent oracle against which the eigendecomposition propagator is
checked; vdc_decay_probe measures the t^(1/3) scaling directly.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, PrecisionError

_GL_NODES_PER_PANEL = 24


def dispersion(m, rho, order=0):
    """W(rho) and derivatives up to third order, in closed form."""
    if m <= 0:
        raise DomainError("dispersion needs m > 0")
    rho = np.asarray(rho, dtype=np.float64)
    w = np.sqrt(2.0 + m * m - 2.0 * np.cos(rho))
    if order == 0:
        out = w
    elif order == 1:
        out = np.sin(rho) / w
    elif order == 2:
        out = np.cos(rho) / w - np.sin(rho) ** 2 / w**3
    elif order == 3:
        s, c = np.sin(rho), np.cos(rho)
        out = -s / w - 3.0 * c * s / w**3 + 3.0 * s**3 / w**5
    else:
        raise DomainError("order must be in {0,1,2,3}")
    return float(out) if out.ndim == 0 else out


def _third_over_sin(m, rho):
    """|W'''(rho)| / |sin rho|, continuous up to the endpoints."""
    rho = np.asarray(rho, dtype=np.float64)
    w = np.sqrt(2.0 + m * m - 2.0 * np.cos(rho))
    c = np.cos(rho)
    s2 = np.sin(rho) ** 2
    return np.abs(-1.0 / w - 3.0 * c / w**3 + 3.0 * s2 / w**5)


@lru_cache(maxsize=64)
def critical_velocity(m):
    """(v_max, rho_star): the inflection of W and the maximal group velocity.

    W'' changes sign exactly once on (0, pi); bisection to ~1e-14.
    """
    if m <= 0:
        raise DomainError("critical_velocity needs m > 0")
    lo, hi = 1e-12, math.pi - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dispersion(m, mid, 2) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    rho_star = 0.5 * (lo + hi)
    return float(dispersion(m, rho_star, 1)), float(rho_star)


@dataclass(frozen=True)
class DispersionProfile:
    """Closed-form dispersion data plus the measured sandwich constants.

    C1 and C2 bracket |W'''| / |sin rho| over [0, pi] (grid of 1001 points
    including the endpoint limits), so C1*|sin| <= |W'''| <= C2*|sin|.
    """

    m: float
    v_max: float
    rho_star: float
    c1: float
    c2: float

    def omega(self, rho, order=0):
        return dispersion(self.m, rho, order)


def dispersion_profile(m, grid_points=1001):
    ratios = _third_over_sin(m, np.linspace(0.0, math.pi, grid_points))
    v_max, rho_star = critical_velocity(m)
    return DispersionProfile(float(m), v_max, rho_star, float(ratios.min()), float(ratios.max()))


@lru_cache(maxsize=8)
def _gl_reference(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _panel_quadrature(n_panels):
    """Nodes and weights for n_panels equal panels on [0, pi]."""
    x, w = _gl_reference(_GL_NODES_PER_PANEL)
    edges = np.linspace(0.0, math.pi, n_panels + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    nodes = (centers[:, None] + half * x[None, :]).ravel()
    weights = np.tile(half * w, n_panels)
    return nodes, weights


def _kernel_value(n, t, m, which, n_panels):
    nodes, weights = _panel_quadrature(n_panels)
    w_disp = dispersion(m, nodes, 0)
    if which == "cos":
        osc = np.cos(t * w_disp)
    else:
        osc = np.sin(t * w_disp) / w_disp
    return float(np.dot(weights, np.cos(n * nodes) * osc) / math.pi)


def min_panels(n, t, m):
    """Panel count from the oscillation budget (<= 4 periods per panel)."""
    v_max, _ = critical_velocity(m)
    width = 4.0 * 2.0 * math.pi / (abs(t) * v_max + abs(n) + 1.0)
    return max(1, int(math.ceil(math.pi / width)))


def free_kernel(n, t, m, which="cos", tol=1e-9, max_doublings=6):
    """Free propagator kernel by panelized Gauss-Legendre quadrature.

    which="cos":  (1/pi) int_0^pi cos(n rho) cos(t W(rho)) d rho
    which="sinc": (1/pi) int_0^pi cos(n rho) sin(t W(rho))/W(rho) d rho

    Panels obey the oscillation budget; the value is accepted when doubling
    the panel count moves it by <= tol, else panels double again up to the
    budget and a PrecisionError carries the best estimate.
    """
    if which not in ("cos", "sinc"):
        raise DomainError("which must be 'cos' or 'sinc'")
    if m <= 0:
        raise DomainError("free_kernel needs m > 0")
    if max_doublings < 1:
        raise DomainError("max_doublings must be >= 1 (the error estimate needs one refinement)")
    panels = min_panels(n, t, m)
    value = _kernel_value(n, t, m, which, panels)
    for _ in range(max_doublings):
        panels *= 2
        refined = _kernel_value(n, t, m, which, panels)
        delta = abs(refined - value)
        value = refined
        if delta <= tol:
            return value
    raise PrecisionError(
        "free_kernel(n=%s, t=%s) did not reach %.1e within panel budget" % (n, t, tol),
        delta,
    )


@dataclass(frozen=True)
class VdcProbeRow:
    t: float
    sup_abs_k: float
    scaled: float  # t^(1/3) * sup_n |K(n, t)|
    n_argmax: int


@dataclass(frozen=True)
class VdcProbeResult:
    rows: tuple
    ratio: float  # max/min of the scaled column

    def scaled_values(self):
        return np.array([r.scaled for r in self.rows])


def vdc_decay_probe(m, t_grid, which="cos", tol=1e-9):
    """t^(1/3)-scaled sup of the free kernel over the light cone, per t.

    For each t the sup runs over n in [-ceil(1.05 v_max t), ceil(1.05 v_max t)]
    (the kernel is even in n, so only n >= 0 is evaluated).  All n at a given
    t share one quadrature rule sized for the hardest n; acceptance of the
    rule follows the same doubling test as free_kernel, applied to the whole
    row of kernel values at once.
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.shape[0] < 8:
        raise DomainError("vdc probe needs at least 8 time points")
    v_max, _ = critical_velocity(m)
    rows = []
    for t in t_grid:
        n_max = int(math.ceil(1.05 * v_max * t))
        ns = np.arange(0, n_max + 1)
        panels = min_panels(n_max, t, m)
        vals = _kernel_row(ns, t, m, which, panels)
        achieved = None
        for _ in range(6):
            panels *= 2
            refined = _kernel_row(ns, t, m, which, panels)
            achieved = float(np.max(np.abs(refined - vals)))
            vals = refined
            if achieved <= tol:
                break
        else:
            raise PrecisionError(
                "vdc probe at t=%g did not reach %.1e" % (t, tol), achieved
            )
        j = int(np.argmax(np.abs(vals)))
        sup = float(abs(vals[j]))
        rows.append(VdcProbeRow(float(t), sup, float(t ** (1.0 / 3.0) * sup), int(ns[j])))
    scaled = np.array([r.scaled for r in rows])
    return VdcProbeResult(tuple(rows), float(scaled.max() / scaled.min()))


def _kernel_row(ns, t, m, which, n_panels, chunk=512):
    """free-kernel values for an array of n at fixed t, sharing one rule."""
    nodes, weights = _panel_quadrature(n_panels)
    w_disp = dispersion(m, nodes, 0)
    if which == "cos":
        osc = weights * np.cos(t * w_disp)
    else:
        osc = weights * (np.sin(t * w_disp) / w_disp)
    out = np.empty(ns.shape[0])
    for a in range(0, ns.shape[0], chunk):
        block = ns[a : a + chunk, None] * nodes[None, :]
        out[a : a + chunk] = np.cos(block) @ osc
    return out / math.pi
