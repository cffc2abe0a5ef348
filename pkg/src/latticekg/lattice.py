"""Truncated lattice operators as symmetric tridiagonal matrices.

The window is {-N, ..., N} with Dirichlet truncation.  Both operators used by
the package are Jacobi matrices with off-diagonal -1:

    H: diagonal V(theta + n*omega)            (Schroedinger, H = G - 2)
    T: diagonal 2 + m^2 + V(theta + n*omega)  (Klein-Gordon, T = G + m^2)

The eigensolver is Sturm-sequence bisection for eigenvalues plus inverse
iteration with cluster re-orthogonalization for eigenvectors, so that exact
eigenvalue counts (eigen_count_below) come from the same machinery and the
whole path is deterministic.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from .errors import DimensionError, DomainError
from .potential import evaluate_orbit


@dataclass(frozen=True)
class LatticeWindow:
    """Sites n in {-N, ..., N}; M = 2N+1 is always odd."""

    n_half: int

    def __post_init__(self):
        if self.n_half < 0 or int(self.n_half) != self.n_half:
            raise DomainError("window half-width must be a non-negative integer")

    @property
    def size(self):
        return 2 * self.n_half + 1

    def sites(self):
        return np.arange(-self.n_half, self.n_half + 1)

    def offset(self, site):
        """Array offset of lattice site n."""
        if not -self.n_half <= site <= self.n_half:
            raise DimensionError("site %d outside window [-%d, %d]" % (site, self.n_half, self.n_half))
        return int(site) + self.n_half


class JacobiMatrix:
    """Symmetric tridiagonal operator with off-diagonal -1 on a lattice window."""

    def __init__(self, diagonal, tag, window=None, m=None, provenance=None):
        self.diagonal = np.ascontiguousarray(diagonal, dtype=np.float64)
        if self.diagonal.ndim != 1 or self.diagonal.shape[0] < 1:
            raise DimensionError("diagonal must be a nonempty 1-d array")
        if tag not in ("H", "T"):
            raise DomainError("operator tag must be 'H' or 'T'")
        self.tag = tag
        self.window = window if window is not None else LatticeWindow((self.diagonal.shape[0] - 1) // 2)
        if self.window.size != self.diagonal.shape[0]:
            raise DimensionError("window size does not match diagonal length")
        self.m = m
        # provenance fields (potential/omega/theta/...) feed the cache key
        self.provenance = provenance

    @property
    def size(self):
        return self.diagonal.shape[0]

    def scale(self):
        """max(1, ||J||_inf); the tolerance unit of the eigensolver."""
        return max(1.0, float(np.max(np.abs(self.diagonal))) + 2.0)

    def dense(self):
        m = self.size
        a = np.diag(self.diagonal)
        idx = np.arange(m - 1)
        a[idx, idx + 1] = -1.0
        a[idx + 1, idx] = -1.0
        return a

    def banded(self, shift=0.0):
        """The (1,1)-banded storage of J - shift*I for scipy.linalg.solve_banded."""
        m = self.size
        dtype = np.result_type(self.diagonal.dtype, type(shift))
        ab = np.zeros((3, m), dtype=dtype)
        ab[0, 1:] = -1.0
        ab[1, :] = self.diagonal - shift
        ab[2, :-1] = -1.0
        return ab


def build_operator(V, omega, theta, window, tag, m=None):
    """Assemble H or T on the window for potential V along theta + n*omega."""
    if tag == "T":
        if m is None or m <= 0:
            raise DomainError("tag T requires mass m > 0 (the m = 0 wave case is excluded)")
    elif tag != "H":
        raise DomainError("operator tag must be 'H' or 'T'")
    offsets = window.sites()
    diag = evaluate_orbit(V, theta, omega, offsets)
    if tag == "T":
        diag = diag + 2.0 + float(m) ** 2
    prov = {
        "coefficients": tuple(sorted((k, (v.real, v.imag)) for k, v in V.coefficients.items())),
        "r": V.r,
        "omega": tuple(np.atleast_1d(omega).astype(float)),
        "theta": tuple(np.atleast_1d(theta).astype(float)),
        "n_half": window.n_half,
        "tag": tag,
        "m": None if m is None else float(m),
    }
    return JacobiMatrix(diag, tag, window=window, m=m, provenance=prov)


def apply(J, x):
    """J x with Dirichlet zeros outside the window."""
    x = np.asarray(x)
    if x.shape[0] != J.size:
        raise DimensionError("vector length %d != window size %d" % (x.shape[0], J.size))
    out = J.diagonal * x
    out[:-1] -= x[1:]
    out[1:] -= x[:-1]
    return out


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues and (optionally) orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column j belongs to eigenvalues[j]; None if not requested

    @property
    def size(self):
        return self.eigenvalues.shape[0]


def eigen_count_below(J, E):
    """Number of eigenvalues strictly below E; one O(M) Sturm pass."""
    return int(_kernels.sturm_count(J.diagonal, float(E)))


def eigenvalues_only(J):
    """All eigenvalues by bisection, without eigenvectors."""
    tol = 1e-12 * J.scale()
    return np.sort(_kernels.bisect_eigenvalues(J.diagonal, tol))


def _inverse_iteration(J, w):
    """Eigenvectors for the bisected eigenvalues w by shifted inverse iteration."""
    m = J.size
    scale = J.scale()
    cluster_tol = 1e-8 * scale
    extra_tol = 1e-5 * scale  # below this gap an extra solve is cheap insurance
    res_target = 1e-11  # per-unit-eigenvalue residual target, under the 1e-10 invariant
    q = np.zeros((m, m))
    rng = np.random.Generator(np.random.PCG64(0x5EED))
    starts = rng.standard_normal((m, min(m, 8)))  # reused start pool, deterministic

    gaps = np.empty(m)
    gaps[:] = np.inf
    if m > 1:
        dw = np.diff(w)
        gaps[:-1] = np.minimum(gaps[:-1], dw)
        gaps[1:] = np.minimum(gaps[1:], dw)

    # cluster boundaries: indices glued when the gap is below cluster_tol
    cluster_start = 0
    clusters = []
    for j in range(1, m + 1):
        if j == m or w[j] - w[j - 1] > cluster_tol:
            clusters.append((cluster_start, j))
            cluster_start = j
    for a, b in clusters:
        for j in range(a, b):
            shift = w[j]
            if j > a:
                # split identical shifts inside a cluster (inverse-iteration lore)
                shift = shift + (j - a) * 1e-13 * scale
            ab = J.banded(shift)
            x = starts[:, (j - a) % starts.shape[1]].copy()
            x /= np.linalg.norm(x)
            n_solves = 3 if gaps[j] < extra_tol else 2
            for it in range(5):
                x = solve_banded((1, 1), ab, x, check_finite=False)
                for i in range(a, j):  # keep the cluster orthonormal as it grows
                    x -= (q[:, i] @ x) * q[:, i]
                nrm = np.linalg.norm(x)
                if nrm == 0.0 or not np.isfinite(nrm):
                    x = starts[:, (j - a + 1) % starts.shape[1]].copy()
                    x /= np.linalg.norm(x)
                    continue
                x /= nrm
                if it + 1 >= n_solves:
                    r = apply(J, x) - w[j] * x
                    if np.linalg.norm(r) <= res_target * (1.0 + abs(w[j])):
                        break
            q[:, j] = x
    return q


def eigen(J, want_vectors=True):
    """Full spectral decomposition of a JacobiMatrix.

    Eigenvalues by Sturm bisection to 1e-12 * scale; eigenvectors by inverse
    iteration, re-orthogonalized inside near-degenerate clusters
    (gap < 1e-8 * scale).
    """
    w = eigenvalues_only(J)
    if not want_vectors:
        return EigenDecomposition(w, None)
    q = _inverse_iteration(J, w)
    return EigenDecomposition(w, q)
