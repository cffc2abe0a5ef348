"""Rotation numbers, Lyapunov exponents, and gap detection/labeling."""

import math

import numpy as np
import pytest

from conftest import GOLDEN_OMEGA, free_operator
from latticekg.cocycle import (
    UnlabeledGapWarning,
    gap_label,
    gap_scan,
    ids_from_counts,
    lyapunov,
    matrix_product,
    orbit_samples,
    rotation_number,
    transfer,
)
from latticekg.errors import DomainError
from latticekg.lattice import LatticeWindow, build_operator
from latticekg.potential import cos_potential, zero_potential

FREE = zero_potential()


def test_transfer_matrix():
    t = transfer(1.3, cos_potential(0.2), (0.7,))
    assert t.det() == 1.0
    expect = 0.4 * math.cos(0.7) - 1.3
    np.testing.assert_allclose(t.matrix(), [[expect, -1.0], [1.0, 0.0]], atol=1e-15)


def test_free_rotation_closed_form():
    # rho(E) = arccos(-E/2) on the free spectrum [-2, 2]
    rr = rotation_number(1.0, FREE, (0.0,))
    assert rr.value == pytest.approx(math.acos(-0.5), abs=1e-5)
    assert 0.0 < rr.error < 1e-4
    assert rr.n_iter == 1_000_000
    for E in (-1.5, -0.5, 0.5, 1.5):
        got = rotation_number(E, FREE, (0.0,), n_iter=200_000).value
        assert got == pytest.approx(math.acos(-E / 2.0), abs=1e-5)


def test_rotation_saturates_outside_spectrum():
    # convergence to the edge values is O(1/n) like everywhere else
    assert rotation_number(3.0, FREE, (0.0,)).value == pytest.approx(
        math.pi, abs=1e-5
    )
    assert rotation_number(-3.0, FREE, (0.0,)).value == pytest.approx(0.0, abs=1e-5)


def test_rotation_validation():
    with pytest.raises(DomainError):
        rotation_number(0.0, FREE, (0.0,), n_iter=500)
    with pytest.raises(DomainError):
        orbit_samples(FREE, (0.0,), (0.0,), 0)


def test_lyapunov_free():
    # Hyperbolic side: L(E) = log((|E| + sqrt(E^2-4))/2) off the spectrum.
    got = lyapunov(3.0, FREE, (0.0,))
    assert got == pytest.approx(math.log((3.0 + math.sqrt(5.0)) / 2.0), abs=1e-5)
    # Inside the spectrum the exponent vanishes (clamped at 0 from above).
    assert 0.0 <= lyapunov(0.0, FREE, (0.0,), n_iter=100_000) < 1e-3


def test_lyapunov_herman_lower_bound():
    # For 2*lam*cos with lam > 1 the exponent is at least log(lam) everywhere.
    got = lyapunov(0.0, cos_potential(1.5), (GOLDEN_OMEGA,), n_iter=200_000)
    assert got >= math.log(1.5) - 0.01


def test_matrix_product_renormalized_det():
    # Hyperbolic energy: det(B) = exp(-2*log_scale) decays fast, so keep n
    # small enough that it stays above the float cancellation floor.
    B, log_scale = matrix_product(3.0, FREE, (0.0,), (0.0,), 8)
    assert B.shape == (2, 2)
    det = float(np.linalg.det(B))
    assert det * math.exp(2.0 * log_scale) == pytest.approx(1.0, rel=1e-7)
    # Elliptic energy: no growth, so the identity holds tightly at length 200.
    B2, ls2 = matrix_product(1.2, FREE, (0.0,), (0.0,), 200)
    assert float(np.linalg.det(B2)) * math.exp(2.0 * ls2) == pytest.approx(
        1.0, rel=1e-10
    )
    # growth rate approximates the Lyapunov exponent
    _, ls = matrix_product(3.0, FREE, (0.0,), (0.0,), 200)
    assert ls / 200.0 == pytest.approx(math.log((3.0 + math.sqrt(5.0)) / 2.0), abs=5e-3)


def test_matrix_product_reconstructs_power():
    n = 10
    B, log_scale = matrix_product(3.0, FREE, (0.0,), (0.0,), n)
    A = np.array([[-3.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(
        B * math.exp(log_scale), np.linalg.matrix_power(A, n), rtol=1e-12
    )


def test_gap_label_exact_hit():
    rho = GOLDEN_OMEGA / 2.0  # <k, omega>/2 at k = 1, already in (0, pi)
    lab = gap_label(rho, (GOLDEN_OMEGA,), 3)
    assert lab.k == (1,)
    assert lab.residual == 0.0
    assert lab.labeled
    assert ((1,), 0.0) in lab.candidates


def test_gap_label_unlabeled_warns():
    with pytest.warns(UnlabeledGapWarning):
        lab = gap_label(0.5, (GOLDEN_OMEGA,), 1)
    assert not lab.labeled
    assert lab.residual == pytest.approx(0.5, abs=1e-12)  # k = 0 is the best try
    with pytest.raises(DomainError):
        gap_label(0.5, (GOLDEN_OMEGA,), 0)


def test_gap_scan_free_finds_no_gaps():
    window = LatticeWindow(300)
    J = build_operator(FREE, (0.0,), 0.0, window, "H")
    e_grid = np.linspace(-1.5, 1.5, 13)
    scan = gap_scan(FREE, (0.0,), [np.zeros(1)], [J], e_grid, n_iter=100_000)
    assert scan.gaps == ()
    assert not scan.is_gap.any()
    assert np.all(np.diff(scan.rho) > 0)
    assert np.max(scan.lyap) < 1e-3


def test_gap_scan_labels_interior_gaps():
    V = cos_potential(0.5)
    window = LatticeWindow(64)
    thetas = [np.array([0.0]), np.array([2.0])]
    ops = [build_operator(V, (GOLDEN_OMEGA,), th, window, "H") for th in thetas]
    e_grid = np.arange(-2.6, 2.65, 0.05)
    scan = gap_scan(V, (GOLDEN_OMEGA,), thetas, ops, e_grid, n_iter=50_000)
    interior = [g for g in scan.gaps if g.label.k != (0,) and g.label.labeled]
    assert len(interior) >= 1
    # the widest label should be the first harmonic, rho = <omega>/2 mod pi
    assert any(g.label.k in ((1,), (-1,)) for g in interior)
    # per-point bookkeeping is consistent with the intervals
    lo = np.array([g.e_lo for g in scan.gaps])
    hi = np.array([g.e_hi for g in scan.gaps])
    assert np.all(lo[1:] >= hi[:-1])
    for i, e in enumerate(scan.e_grid):
        if scan.is_gap[i]:
            assert scan.gap_k[i] is not None
        else:
            assert scan.gap_k[i] is None


def test_gap_scan_validation():
    window = LatticeWindow(10)
    J = build_operator(FREE, (0.0,), 0.0, window, "H")
    with pytest.raises(DomainError):
        gap_scan(FREE, (0.0,), [np.zeros(1)], [J], np.array([0.0]))
    with pytest.raises(DomainError):
        gap_scan(FREE, (0.0,), [np.zeros(1), np.ones(1)], [J], np.linspace(0, 1, 5))


def test_ids_matches_free_rotation():
    J = free_operator(1000, tag="H")
    ids = ids_from_counts(J, 0.5)
    assert abs(ids - math.acos(-0.25) / math.pi) <= 5.0 / J.size
