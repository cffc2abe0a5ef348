"""Linear/nonlinear evolution, decay fits, and space-time norms."""

import math

import numpy as np
import pytest

from conftest import delta_data, free_operator
from latticekg.calculus import PropagatorCache, kg_propagate
from latticekg.dynamics import (
    Trajectory,
    admissible_q,
    decay_fit,
    empirical_k1,
    evolve_linear,
    evolve_nonlinear,
    small_data_report,
    strichartz_norm,
    strichartz_report,
)
from latticekg.errors import (
    ContaminatedTrajectoryError,
    DimensionError,
    DomainError,
    InsufficientDataError,
    MissingStatesError,
    WindowError,
)
from latticekg.oscillatory import free_kernel


def synthetic_trajectory(times, linf, phi_l1=1.0, psi_l1=0.0):
    return Trajectory(
        times=np.asarray(times, dtype=float),
        norms={"linf": np.asarray(linf, dtype=float)},
        meta={"phi_l1": phi_l1, "psi_l1": psi_l1},
    )


def test_evolve_linear_basics():
    J = free_operator(60)
    phi, psi = delta_data(J.window, 0), np.zeros(J.size)
    t_grid = np.array([0.0, 5.0, 10.0, 20.0, 30.0])
    traj = evolve_linear(J, phi, psi, t_grid, store="full")
    assert not traj.lean and not traj.blown_up
    np.testing.assert_allclose(traj.states[0].u, phi, atol=1e-12)
    # conserved quadratic energy
    e = traj.norms["energy"]
    assert np.max(np.abs(e - e[0])) < 1e-12 * e[0]
    # norms agree with the stored states
    u_last = traj.states[-1].u
    assert traj.norms["linf"][-1] == pytest.approx(np.max(np.abs(u_last)), abs=0)
    assert traj.norms["l4"][-1] == pytest.approx(np.sum(u_last**4) ** 0.25, rel=1e-14)
    assert traj.norms["l6"][-1] == pytest.approx(
        np.sum(u_last**6) ** (1 / 6), rel=1e-14
    )
    # spot check against the free kernel
    i = J.window.offset(4)
    assert u_last[i] == pytest.approx(free_kernel(4, 30.0, 1.0), abs=1e-8)


def test_evolve_linear_validation():
    J = free_operator(20)
    phi = delta_data(J.window, 0)
    with pytest.raises(DimensionError):
        evolve_linear(J, phi[:-1], np.zeros(J.size), [1.0])
    with pytest.raises(DomainError):
        evolve_linear(J, phi, np.zeros(J.size), [2.0, 1.0])
    with pytest.raises(DomainError):
        evolve_linear(J, phi, np.zeros(J.size), [1.0], store="everything")


def test_evolve_linear_window_too_small():
    J = free_operator(20)
    phi = delta_data(J.window, 0)
    with pytest.raises(WindowError):
        evolve_linear(J, phi, np.zeros(J.size), [100.0])


def test_sentinel_catches_wavefront_skirt():
    # Passes the group-velocity precheck (needs n >= 75) but the dispersive
    # skirt ahead of the front still reaches the boundary at 1e-8 relative.
    J = free_operator(80)
    phi = delta_data(J.window, 0)
    with pytest.raises(ContaminatedTrajectoryError):
        evolve_linear(J, phi, np.zeros(J.size), [100.0])


def test_decay_fit_exact_power_law():
    t = np.geomspace(50.0, 1500.0, 240)
    rep = decay_fit(synthetic_trajectory(t, 2.5 * t ** (-1.0 / 3.0)))
    assert rep.tau_hat == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert rep.r2 == pytest.approx(1.0, abs=1e-12)
    assert rep.ci_high - rep.ci_low < 1e-9
    assert rep.t_lo == pytest.approx(75.0) and rep.t_hi == pytest.approx(1500.0)
    assert rep.peak_count >= 8
    assert rep.n_fit_points == int(np.sum(t >= 75.0))
    # <t>^tau * f -> 2.5 from above as t grows
    assert 2.5 <= rep.k1_empirical <= 2.51
    assert "effective exponent" in rep.caveat


def test_decay_fit_grid_preconditions():
    t_short = np.geomspace(1.0, 99.0, 240)
    with pytest.raises(DomainError, match="t_K"):
        decay_fit(synthetic_trajectory(t_short, t_short**-0.5))
    t_few = np.geomspace(1.0, 200.0, 150)
    with pytest.raises(DomainError, match="200 recorded"):
        decay_fit(synthetic_trajectory(t_few, t_few**-0.5))
    t_lin = np.linspace(1.0, 200.0, 240)
    with pytest.raises(DomainError, match="geometric"):
        decay_fit(synthetic_trajectory(t_lin, t_lin**-0.5))


def test_decay_fit_data_preconditions():
    t = np.geomspace(50.0, 1500.0, 240)
    f = t**-0.5
    f[100] = 0.0
    with pytest.raises(InsufficientDataError, match="vanishes"):
        decay_fit(synthetic_trajectory(t, f))
    # huge range: fewer than 8 samples land in [t_K/20, t_K]
    t_wide = np.geomspace(100.0 * 20.0 ** (-199.0 / 5.0), 100.0, 200)
    with pytest.raises(InsufficientDataError, match="envelope points"):
        decay_fit(synthetic_trajectory(t_wide, t_wide**-0.5))
    # one spike dominating the fit window starves the distinct-peak count
    t_sp = np.geomspace(100.0 * 20.0 ** (-199.0 / 9.0), 100.0, 200)
    f_sp = 0.01 * t_sp ** (-1.0 / 3.0)
    f_sp[192] = 50.0
    with pytest.raises(InsufficientDataError, match="envelope peaks"):
        decay_fit(synthetic_trajectory(t_sp, f_sp))


def test_empirical_k1():
    traj = synthetic_trajectory([100.0, 200.0], [1.0, 0.5], phi_l1=2.0)
    got = empirical_k1(traj, 0.5)
    assert got == pytest.approx(math.sqrt(1.0 + 100.0**2) ** 0.5 / 2.0, rel=1e-12)
    assert empirical_k1(synthetic_trajectory([100.0], [1.0], phi_l1=0.0), 0.5) == float(
        "inf"
    )


def test_admissible_q():
    assert admissible_q(0.3, 2.0) == math.inf
    assert admissible_q(0.3, math.inf) == pytest.approx(2.0 / 0.3, rel=1e-15)
    assert admissible_q(0.3, 6.0) == pytest.approx(10.0, rel=1e-15)
    for r in (3.0, 4.0, 8.0):
        q = admissible_q(0.25, r)
        assert 2.0 / q == pytest.approx(0.25 * (1.0 - 2.0 / r), rel=1e-12)
    with pytest.raises(DomainError):
        admissible_q(0.0, 4.0)
    with pytest.raises(DomainError):
        admissible_q(1.0 / 3.0, 4.0)
    with pytest.raises(DomainError):
        admissible_q(0.3, 1.9)


def test_strichartz_norm_matches_manual_trapezoid():
    J = free_operator(40)
    phi = delta_data(J.window, 0)
    t_grid = np.linspace(0.0, 20.0, 81)
    traj = evolve_linear(J, phi, np.zeros(J.size), t_grid, store="full")
    # q = inf, r = 2: running sup of the l2 norm
    assert strichartz_norm(traj, math.inf, 2.0) == pytest.approx(
        float(np.max(traj.norms["l2"])), rel=1e-14
    )
    # q = 2, r = inf against a hand trapezoid over the stored states
    vals = np.array([np.max(np.abs(st.u)) for st in traj.states])
    oracle = float(np.trapezoid(vals**2, t_grid)) ** 0.5
    assert strichartz_norm(traj, 2.0, math.inf) == pytest.approx(oracle, rel=1e-13)
    lean = evolve_linear(J, phi, np.zeros(J.size), t_grid)
    with pytest.raises(MissingStatesError):
        strichartz_norm(lean, 2.0, math.inf)


def test_strichartz_report_structure():
    J = free_operator(66)
    phi = delta_data(J.window, 0)
    rep = strichartz_report(
        J, phi, np.zeros(J.size), 0.3, (2.0, 6.0), (20.0, 40.0), dt=0.25
    )
    assert rep.t_values == (20.0, 40.0)
    assert rep.tau == 0.3
    assert len(rep.pairs) == 2
    assert rep.pairs[0]["q"] == math.inf and rep.pairs[0]["r"] == 2.0
    assert rep.pairs[1]["q"] == pytest.approx(10.0)
    data = float(np.linalg.norm(phi))
    for pair in rep.pairs:
        assert pair["ratio"] == pytest.approx(pair["norm"] / data, rel=1e-12)
    assert 0.0 <= rep.saturation_delta < 0.05
    with pytest.raises(DomainError):
        strichartz_report(J, phi, np.zeros(J.size), 0.3, (6.0,), (40.0, 20.0))
    with pytest.raises(DomainError):
        strichartz_report(
            J, np.zeros(J.size), np.zeros(J.size), 0.3, (6.0,), (20.0, 40.0)
        )


def test_nonlinear_strang_is_second_order():
    J = free_operator(20)
    phi = 0.8 * delta_data(J.window, 0)
    psi = np.zeros(J.size)
    drifts = []
    for dt in (0.04, 0.02):
        traj = evolve_nonlinear(J, phi, psi, 3.0, -1, dt, 5.0)
        e = traj.norms["energy"]
        drifts.append(float(np.max(np.abs(e - e[0]))))
    ratio = drifts[0] / drifts[1]
    assert 3.0 < ratio < 5.0


def test_nonlinear_zero_amplitude_limit_matches_linear():
    J = free_operator(15)
    phi = 1e-7 * delta_data(J.window, 0)
    psi = np.zeros(J.size)
    traj = evolve_nonlinear(J, phi, psi, 3.0, 1, 0.04, 1.0, store="full")
    ref = kg_propagate(PropagatorCache(J), phi, psi, 1.0)
    np.testing.assert_allclose(traj.states[-1].u, ref.u, atol=1e-18)
    np.testing.assert_allclose(traj.states[-1].v, ref.v, atol=1e-18)


def test_nonlinear_validation():
    J = free_operator(20)
    phi = delta_data(J.window, 0)
    psi = np.zeros(J.size)
    with pytest.raises(DomainError):
        evolve_nonlinear(J, phi, psi, 1.0, -1, 0.01, 1.0)
    with pytest.raises(DomainError):
        evolve_nonlinear(J, phi, psi, 3.0, 0, 0.01, 1.0)
    with pytest.raises(DomainError):
        evolve_nonlinear(J, phi, psi, 3.0, -1, 0.2, 1.0)  # over the dt budget
    with pytest.raises(DomainError):
        evolve_nonlinear(J, phi, psi, 3.0, -1, 0.04, 0.1)  # not a step multiple
    with pytest.raises(DimensionError):
        evolve_nonlinear(J, phi[:-1], psi, 3.0, -1, 0.04, 1.0)


def test_nonlinear_blowup_is_reported_not_raised():
    J = free_operator(20)
    phi = 20.0 * delta_data(J.window, 0)
    traj = evolve_nonlinear(J, phi, np.zeros(J.size), 5.0, 1, 0.04, 5.0)
    assert traj.blown_up
    assert traj.blow_up_time is not None and traj.blow_up_time <= 5.0
    assert traj.times[-1] == pytest.approx(traj.blow_up_time)
    assert traj.norms["linf"][-1] > 1e6


def test_small_data_report():
    J = free_operator(42)
    phi = 0.05 * delta_data(J.window, -5)
    psi = 0.05 * delta_data(J.window, 5)
    traj = evolve_nonlinear(J, phi, psi, 9.0, -1, 0.04, 10.0, record_every=5, store="full")
    rep = small_data_report(traj)
    assert [row["r"] for row in rep.rows] == [4.0, 6.0, math.inf]
    for row in rep.rows:
        assert 0.0 < row["late_max"] <= row["global_max"]
        assert row["ratio"] == pytest.approx(row["late_max"] / row["global_max"])
    assert rep.l2_sup_ratio >= 1.0 - 1e-12
    lean = evolve_nonlinear(J, phi, psi, 9.0, -1, 0.04, 1.0)
    with pytest.raises(MissingStatesError):
        small_data_report(lean)
