"""Quasi-periodic potentials, Diophantine frequency diagnostics, KAM bookkeeping.

A potential is a finite trigonometric polynomial V(theta) = sum_k v_k e^{i<k,theta>}
on the d-torus with the reality constraint v_{-k} = conj(v_k).  Frequencies omega
carry their Diophantine exponent eta and a finite probe cutoff K_max; the margin
gamma_eff computed here is the finite-cutoff stand-in for the (existential)
Diophantine constant gamma.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ResonanceError

TWO_PI = 2.0 * math.pi


def dist_pi(x):
    """Distance from x (scalar or array) to the nearest multiple of pi.

    The reduction x - pi*round(x/pi) is done in extended precision so that
    arguments of size ~1e6 (long cocycle orbits, large |k|) keep full accuracy.
    """
    xl = np.asarray(x, dtype=np.longdouble)
    pi_l = np.longdouble(math.pi)
    red = xl - pi_l * np.rint(xl / pi_l)
    out = np.abs(red).astype(np.float64)
    return out if out.ndim else float(out)


class TrigPolynomialPotential:
    """Real-valued finite trigonometric polynomial on the d-torus.

    Parameters
    ----------
    d : dimension of the torus.
    coefficients : mapping from integer index tuples k (length d) to complex v_k.
        Must satisfy v_{-k} = conj(v_k); zero coefficients may be omitted.
    r : nominal analytic radius (> 0) used by the majorant norm.
    """

    def __init__(self, d, coefficients, r):
        if d < 1 or int(d) != d:
            raise ConfigError("potential dimension d must be a positive integer")
        if r <= 0:
            raise ConfigError("analytic radius r must be positive")
        self.d = int(d)
        self.r = float(r)
        table = {}
        for k, v in coefficients.items():
            k = tuple(int(ki) for ki in k)
            if len(k) != self.d:
                raise ConfigError("coefficient index %r has wrong dimension" % (k,))
            v = complex(v)
            if v != 0:
                table[k] = v
        self.coefficients = table
        self._check_reality()
        if table:
            self._kvecs = np.array(sorted(table), dtype=np.int64)
            self._vals = np.array([table[tuple(k)] for k in self._kvecs], dtype=np.complex128)
        else:
            self._kvecs = np.zeros((0, self.d), dtype=np.int64)
            self._vals = np.zeros(0, dtype=np.complex128)

    def _check_reality(self):
        scale = max((abs(v) for v in self.coefficients.values()), default=0.0)
        tol = 1e-14 * max(scale, 1.0)
        for k, v in self.coefficients.items():
            mk = tuple(-ki for ki in k)
            w = self.coefficients.get(mk, 0.0)
            if abs(w - v.conjugate()) > tol:
                raise ConfigError(
                    "reality violated: v_%r = %r but v_%r = %r" % (k, v, mk, w)
                )

    def __call__(self, theta):
        return evaluate(self, theta)

    def is_zero(self):
        return len(self.coefficients) == 0


def zero_potential(d=1, r=0.5):
    """V identically zero (the free model)."""
    return TrigPolynomialPotential(d, {}, r)


def cos_potential(lam, d=1, r=0.5):
    """V(theta) = 2*lam*(cos theta_1 + ... + cos theta_d), the AMO-type potential."""
    coeffs = {}
    for axis in range(d):
        k = tuple(1 if i == axis else 0 for i in range(d))
        mk = tuple(-ki for ki in k)
        coeffs[k] = complex(lam)
        coeffs[mk] = complex(lam)
    return TrigPolynomialPotential(d, coeffs, r)


def evaluate(V, theta):
    """V(theta) as a real number; the imaginary residue must stay below 1e-12."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.shape != (V.d,):
        raise ConfigError("theta has shape %r, expected (%d,)" % (theta.shape, V.d))
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta must be componentwise finite")
    if V._kvecs.shape[0] == 0:
        return 0.0
    phases = V._kvecs @ theta
    total = np.sum(V._vals * np.exp(1j * phases))
    if abs(total.imag) > 1e-12:
        raise ConfigError(
            "imaginary residue %.3e exceeds 1e-12; coefficient table violates reality"
            % abs(total.imag)
        )
    return float(total.real)


def evaluate_orbit(V, theta0, omega, offsets):
    """Vectorized V(theta0 + n*omega) for an integer array of offsets n.

    The angle theta0 + n*omega is reduced mod 2*pi in extended precision before
    the trigonometric sum, so orbits of length ~1e6 do not lose phase accuracy.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    omega = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    offsets = np.asarray(offsets, dtype=np.int64)
    if theta0.shape != (V.d,) or omega.shape != (V.d,):
        raise ConfigError("theta0/omega must have shape (%d,)" % V.d)
    n = offsets.shape[0]
    if V._kvecs.shape[0] == 0:
        return np.zeros(n)
    ang = np.mod(
        offsets.astype(np.longdouble)[:, None] * omega.astype(np.longdouble)[None, :]
        + theta0.astype(np.longdouble)[None, :],
        np.longdouble(TWO_PI),
    ).astype(np.float64)
    out = np.zeros(n)
    # accumulate 2*Re(v_k e^{i<k,theta>}) over one representative of each {k,-k} pair
    seen = set()
    for idx in range(V._kvecs.shape[0]):
        k = tuple(V._kvecs[idx])
        if k in seen:
            continue
        mk = tuple(-ki for ki in k)
        seen.add(k)
        seen.add(mk)
        v = V._vals[idx]
        phase = ang @ V._kvecs[idx]
        if mk == k:  # k = 0 term, real by the reality constraint
            out += v.real
        else:
            out += 2.0 * (v.real * np.cos(phase) - v.imag * np.sin(phase))
    return out


def analytic_majorant(V):
    """sum_k |v_k| e^{r|k|_1}; an upper bound for sup |V| and for |V|_r."""
    if V._kvecs.shape[0] == 0:
        return 0.0
    k1 = np.abs(V._kvecs).sum(axis=1)
    return float(np.sum(np.abs(V._vals) * np.exp(V.r * k1)))


def _half_space_indices(d, k_max):
    """Integer vectors with |k|_inf <= k_max whose first nonzero entry is positive."""
    grids = np.meshgrid(*([np.arange(-k_max, k_max + 1)] * d), indexing="ij")
    allk = np.stack([g.ravel() for g in grids], axis=1)
    keep = np.zeros(allk.shape[0], dtype=bool)
    undecided = np.ones(allk.shape[0], dtype=bool)
    for j in range(d):
        col = allk[:, j]
        keep |= undecided & (col > 0)
        undecided &= col == 0
    return allk[keep]


def diophantine_margin(omega, eta, k_max, half_space=True):
    """Finite-cutoff Diophantine margin of omega.

    Returns (gamma_eff, argmin_k) with
    gamma_eff = min over 0 < |k|_inf <= k_max of |k|_inf^eta * dist(<k,omega>, pi*Z).
    The scan runs over the canonical half-space (first nonzero component of k
    positive) since the quantity is even in k; set half_space=False to scan the
    full box (used by the symmetry property test).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    d = omega.shape[0]
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    if half_space:
        kvecs = _half_space_indices(d, int(k_max))
    else:
        grids = np.meshgrid(*([np.arange(-k_max, k_max + 1)] * d), indexing="ij")
        kvecs = np.stack([g.ravel() for g in grids], axis=1)
        kvecs = kvecs[np.any(kvecs != 0, axis=1)]
    dots = kvecs.astype(np.longdouble) @ omega.astype(np.longdouble)
    dists = dist_pi(dots)
    knorm = np.max(np.abs(kvecs), axis=1).astype(np.float64)
    values = knorm**float(eta) * dists
    order = np.argsort(values, kind="stable")
    best = order[0]
    vmin = values[best]
    # deterministic tie-break: lexicographically smallest k among exact ties
    ties = np.flatnonzero(values <= vmin)
    best_k = min(tuple(int(x) for x in kvecs[i]) for i in ties)
    if vmin == 0.0:
        raise ResonanceError(
            "exact resonance: <k,omega> in pi*Z at k=%r" % (best_k,), best_k
        )
    return float(vmin), best_k


@dataclass(frozen=True)
class FrequencyVector:
    """Frequency omega in (0,2pi)^d with Diophantine exponent and probe cutoff.

    Construction computes the finite-cutoff margin and refuses resonant omega.
    """

    omega: tuple
    eta: float
    k_max: int
    gamma_eff: float = field(init=False)
    argmin_k: tuple = field(init=False)

    def __post_init__(self):
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        object.__setattr__(self, "omega", omega)
        d = len(omega)
        for w in omega:
            if not 0.0 < w < TWO_PI:
                raise ConfigError("omega components must lie in (0, 2*pi); got %r" % (omega,))
        if self.eta <= d - 1:
            raise ConfigError("Diophantine exponent eta must exceed d-1")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        gamma, kmin = diophantine_margin(omega, self.eta, self.k_max)
        object.__setattr__(self, "gamma_eff", gamma)
        object.__setattr__(self, "argmin_k", kmin)

    @property
    def d(self):
        return len(self.omega)

    def as_array(self):
        return np.asarray(self.omega, dtype=np.float64)


SIGMA = 1.0 / 200.0


class KamSchedule:
    """The iteration sequences eps_j, N_j with eps_{j+1} = eps_j^{1+sigma}.

    eps_j is stored through its logarithm, log eps_j = (1+sigma)^j log eps_0,
    which stays representable long after eps_j itself underflows.
    """

    def __init__(self, eps0, depth=16):
        if not 0.0 < eps0 < 1.0:
            raise DomainError("eps0 must lie in (0,1)")
        self.eps0 = float(eps0)
        self._depth = 0
        self._log_eps = [math.log(eps0)]
        self.extend(depth)

    @property
    def sigma(self):
        return SIGMA

    @property
    def depth(self):
        return self._depth

    def extend(self, depth):
        while self._depth < depth:
            self._log_eps.append((1.0 + SIGMA) * self._log_eps[-1])
            self._depth += 1

    def log_eps(self, j):
        if j > self._depth:
            self.extend(j)
        return self._log_eps[j]

    def eps(self, j):
        """eps_j; underflows to 0.0 for very large j (logs stay available)."""
        return math.exp(self.log_eps(j)) if self.log_eps(j) > -745.0 else 0.0

    def n_j(self, j):
        """Resonance-scale sequence N_j = 4^{j+1} sigma |log eps_j|."""
        return 4.0 ** (j + 1) * SIGMA * abs(self.log_eps(j))


def kam_depth(t, schedule):
    """Smallest J >= 1 with eps_J^{3 sigma/4} <= <t>^{-5/3}, <t> = sqrt(1+t^2).

    Evaluated in log space, scanning J upwards; the schedule is extended on
    demand and the scan cannot fail for eps0 in (0,1).
    """
    if t < 1.0:
        raise DomainError("kam_depth expects t >= 1")
    bracket = math.sqrt(1.0 + t * t)
    target = -(5.0 / 3.0) * math.log(bracket)
    j = 1
    while (3.0 * SIGMA / 4.0) * schedule.log_eps(j) > target:
        j += 1
    return j
