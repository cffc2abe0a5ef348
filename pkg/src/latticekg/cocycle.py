"""Schroedinger cocycle iteration: rotation numbers, Lyapunov exponents, gaps.

The cocycle over the torus translation theta -> theta + omega is

    A(theta, E) = [[V(theta) - E, -1], [1, 0]]  in SL(2, R).

The fibered rotation number is the mean winding of the projective action,
accumulated through a continuous angle lift and reported in [0, pi] (the
projective phase space is pi-periodic).  Increments are atan2-based on the
branch (-pi/2, 3pi/2]: on the spectrum they fall inside (0, pi), while above
the top of the spectrum the hyperbolic flip winds by ~pi per step, which this
branch tracks continuously (rho = pi there, 0 below the bottom).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError
from .lattice import eigen_count_below
from .potential import dist_pi, evaluate, evaluate_orbit


class UnlabeledGapWarning(UserWarning):
    """A gap plateau matched no label within the cutoff at the 1e-2 level."""


@dataclass(frozen=True)
class TransferMatrix:
    a: float
    b: float
    c: float
    d: float

    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]])

    def det(self):
        return self.a * self.d - self.b * self.c


def transfer(E, V, theta):
    """One-step transfer matrix A0(E) + F0(theta) = [[V(theta)-E, -1], [1, 0]]."""
    return TransferMatrix(evaluate(V, theta) - float(E), -1.0, 1.0, 0.0)


def orbit_samples(V, omega, theta0, n_iter):
    """V(theta0 + n*omega) for n = 0..n_iter-1; shared by scans over many E."""
    if n_iter < 1:
        raise DomainError("n_iter must be positive")
    return evaluate_orbit(V, theta0, omega, np.arange(int(n_iter)))


@dataclass(frozen=True)
class RotationResult:
    value: float  # rho in [0, pi]
    error: float  # Richardson-style estimate |rho_n - rho_{n/2}|
    n_iter: int


def rotation_from_samples(samples, E):
    """Rotation number from a precomputed potential orbit."""
    n = samples.shape[0]
    c = samples - float(E)
    dphi, dphi_half, _, _ = _kernels.cocycle_accumulate(c)
    rho = dphi / n
    rho_half = dphi_half / (n // 2) if n >= 2 else rho
    err = abs(rho - rho_half) + 1e-15
    rho = min(max(rho, 0.0), math.pi)
    return RotationResult(rho, err, n)


def rotation_number(E, V, omega, theta0=None, n_iter=1_000_000):
    """Fibered rotation number rho(E) in [0, pi] with an O(1/n) error estimate."""
    if n_iter < 1000:
        raise DomainError("rotation_number needs n_iter >= 1e3")
    if theta0 is None:
        theta0 = np.zeros(V.d)
    return rotation_from_samples(orbit_samples(V, omega, theta0, n_iter), E)


def lyapunov(E, V, omega, theta0=None, n_iter=1_000_000):
    """Lyapunov exponent (>= 0) from renormalized column growth."""
    if n_iter < 1000:
        raise DomainError("lyapunov needs n_iter >= 1e3")
    if theta0 is None:
        theta0 = np.zeros(V.d)
    samples = orbit_samples(V, omega, theta0, n_iter)
    return lyapunov_from_samples(samples, E)


def lyapunov_from_samples(samples, E):
    n = samples.shape[0]
    c = samples - float(E)
    _, _, lognorm, _ = _kernels.cocycle_accumulate(c)
    return max(lognorm / n, 0.0)


def matrix_product(E, V, omega, theta0, n):
    """Renormalized product of n transfer matrices.

    Returns (B, log_scale): B is the product divided by running Frobenius
    normalization, log_scale the accumulated log of the factors, so that the
    true product is B * exp(log_scale).  det B * exp(2 log_scale) = 1 up to
    rounding; the growth rate log_scale/n estimates the Lyapunov exponent.
    """
    samples = evaluate_orbit(V, theta0, omega, np.arange(int(n)))
    b11, b12, b21, b22 = 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    for i in range(int(n)):
        c = samples[i] - E
        t11 = c * b11 - b21
        t12 = c * b12 - b22
        t21, t22 = b11, b12
        s = math.sqrt(0.5 * (t11 * t11 + t12 * t12 + t21 * t21 + t22 * t22))
        b11, b12, b21, b22 = t11 / s, t12 / s, t21 / s, t22 / s
        log_scale += math.log(s)
    return np.array([[b11, b12], [b21, b22]]), log_scale


@dataclass(frozen=True)
class GapLabel:
    k: tuple
    residual: float
    labeled: bool  # residual within the 1e-2 sanity bar
    candidates: tuple  # (k, residual) pairs within 2x the best residual


def gap_label(rho_plateau, omega, k_label):
    """Best integer label k with rho = <k, omega>/2 mod pi, plus near-ties.

    Scans |k|_inf <= k_label (all signs; k and -k give different labels mod
    pi).  Candidates within twice the best residual are reported rather than
    asserting uniqueness of the label at finite cutoff.
    """
    if k_label < 1:
        raise DomainError("k_label must be >= 1")
    omega = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    d = omega.shape[0]
    rng = np.arange(-int(k_label), int(k_label) + 1)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    kvecs = np.stack([g.ravel() for g in grids], axis=1)
    residuals = dist_pi(kvecs.astype(np.longdouble) @ omega.astype(np.longdouble) / 2.0 - rho_plateau)
    residuals = np.atleast_1d(residuals)
    best_val = residuals.min()
    ties = np.flatnonzero(residuals <= best_val)
    best_k = min(tuple(int(x) for x in kvecs[i]) for i in ties)
    cand_idx = np.flatnonzero(residuals <= 2.0 * best_val + 1e-15)
    cands = sorted(
        (tuple(int(x) for x in kvecs[i]), float(residuals[i])) for i in cand_idx
    )
    labeled = bool(best_val <= 1e-2)
    if not labeled:
        warnings.warn(
            "gap at rho=%.6f carries no label with |k|<=%d (best residual %.3e)"
            % (rho_plateau, k_label, best_val),
            UnlabeledGapWarning,
        )
    return GapLabel(best_k, float(best_val), labeled, tuple(cands))


@dataclass(frozen=True)
class GapInterval:
    e_lo: float
    e_hi: float
    rho: float
    label: GapLabel


@dataclass(frozen=True)
class GapScanResult:
    e_grid: np.ndarray
    rho: np.ndarray
    rho_err: np.ndarray
    lyap: np.ndarray
    count_below: np.ndarray  # counts for the first theta of the grid
    is_gap: np.ndarray  # bool per E-grid point
    gap_k: tuple  # per E-grid point: label tuple or None
    gaps: tuple  # GapInterval, ascending in E


def gap_scan(
    V,
    omega,
    theta_grid,
    operators,
    e_grid,
    n_iter=1_000_000,
    rho_tol=1e-3,
    k_label=3,
    map_fn=map,
):
    """Locate spectral gaps on an E-grid and label their rotation plateaus.

    A consecutive E-grid cell is gap-like when the eigenvalue count of every
    truncated operator in `operators` (one per theta in theta_grid) is flat
    across the cell AND the rotation number moves by at most rho_tol.  Maximal
    runs of gap-like cells become GapIntervals; requiring both signals kills
    the false positives either one produces alone.

    `operators` must be the JacobiMatrix list matching theta_grid; rotation
    numbers are computed along the orbit of theta_grid[0].  map_fn lets the
    harness fan the per-E work to a worker pool (results are merged in E
    order regardless).
    """
    e_grid = np.asarray(e_grid, dtype=np.float64)
    if e_grid.ndim != 1 or e_grid.shape[0] < 2:
        raise DomainError("e_grid must contain at least 2 points")
    if len(operators) != len(theta_grid):
        raise DomainError("need one truncated operator per theta")
    samples = orbit_samples(V, omega, np.atleast_1d(theta_grid[0]), n_iter)

    def per_e(E):
        c = samples - E
        dphi, dphi_half, lognorm, _ = _kernels.cocycle_accumulate(c)
        n = samples.shape[0]
        rho = min(max(dphi / n, 0.0), math.pi)
        err = abs(dphi / n - dphi_half / (n // 2)) + 1e-15
        return rho, err, max(lognorm / n, 0.0)

    rows = list(map_fn(per_e, e_grid))
    rho = np.array([r[0] for r in rows])
    rho_err = np.array([r[1] for r in rows])
    lyap = np.array([r[2] for r in rows])

    counts = np.stack(
        [_kernels.sturm_counts(J.diagonal, e_grid) for J in operators], axis=0
    )
    flat_counts = np.all(counts[:, 1:] == counts[:, :-1], axis=0)
    flat_rho = np.abs(np.diff(rho)) <= rho_tol
    cell_gap = flat_counts & flat_rho

    gaps = []
    is_gap = np.zeros(e_grid.shape[0], dtype=bool)
    gap_k = [None] * e_grid.shape[0]
    i = 0
    while i < cell_gap.shape[0]:
        if cell_gap[i]:
            j = i
            while j + 1 < cell_gap.shape[0] and cell_gap[j + 1]:
                j += 1
            plateau = float(np.mean(rho[i : j + 2]))
            label = gap_label(plateau, omega, k_label)
            gaps.append(GapInterval(float(e_grid[i]), float(e_grid[j + 1]), plateau, label))
            for idx in range(i, j + 2):
                is_gap[idx] = True
                gap_k[idx] = label.k
            i = j + 1
        else:
            i += 1
    return GapScanResult(
        e_grid, rho, rho_err, lyap, counts[0], is_gap, tuple(gap_k), tuple(gaps)
    )


def ids_from_counts(J, E):
    """Finite-volume integrated density of states at E (count / M)."""
    return eigen_count_below(J, E) / J.size
