from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech import BtsState, PumpProfile, Sideband, SystemParams, TmstsState, Trajectory
from optomech.blue import corr_variance, evolve_tmsts, tmsts_populations, tmsts_steady_state
from optomech.integrate import IntegratorConfig
from optomech.oracle import (
    FockDensity,
    FockModel,
    MomentSet,
    bts_density,
    bts_moment_trajectory,
    bts_to_moments,
    compare_trajectories,
    evolve_fock,
    evolve_moments,
    fidelity,
    fock_lindblad_rhs,
    moment_rhs_blue,
    moment_rhs_red,
    moments_from_fock,
    moments_to_bts,
    moments_to_tmsts,
    thermal_dim,
    tmsts_density,
    tmsts_moment_trajectory,
    tmsts_to_moments,
    uncertainty_margin,
)
from optomech.red import bts_populations, evolve_bts, strong_field_population

populations = st.floats(min_value=0.0, max_value=50.0)
angles = st.floats(min_value=-math.pi, max_value=math.pi)


def test_moment_equations_are_stationary_at_equilibrium():
    p = SystemParams.from_dimensionless(0.5, 2.0, 40.0)
    assert np.all(moment_rhs_red(MomentSet(2.0, 40.0), p, 0.0) == 0.0)
    assert np.all(moment_rhs_blue(MomentSet(2.0, 40.0), p, 0.0) == 0.0)


def test_strong_red_drive_balances_the_moments():
    # the moment equations are affine, so the steady state is one linear solve
    p = SystemParams.from_dimensionless(0.99, 0.0, 40.0)
    G = 0.5 * 1e4
    b = moment_rhs_red(np.zeros(4), p, G)
    A = np.column_stack([moment_rhs_red(e, p, G) - b for e in np.eye(4)])
    steady = np.linalg.solve(A, -b)
    assert steady[1] == pytest.approx(strong_field_population(0.99, 0.0, 40.0), rel=1e-6)


@pytest.mark.parametrize(
    "zeta, g_r, detuning, n_c_b, n_m_b",
    [(0.8, 3.5, 0.0, 0.0, 40.0), (0.5, 1.0, 2.0, 1.0, 10.0), (0.99, 10.0, 0.5, 0.0, 75.0)],
)
def test_beam_split_ansatz_solves_the_moment_equations(zeta, g_r, detuning, n_c_b, n_m_b):
    pump = PumpProfile.constant(Sideband.RED, g_r, detuning=detuning)
    t = np.linspace(0.0, 5.0, 51)
    semi = evolve_bts(zeta, n_c_b, n_m_b, pump, 5.0, t_eval=t, cfg=IntegratorConfig(rel_tol=1e-11, abs_tol=1e-14))
    p = SystemParams.from_dimensionless(zeta, n_c_b, n_m_b)
    oracle = evolve_moments(p, pump, MomentSet(n_c_b, n_m_b), 5.0, t)
    report = compare_trajectories(bts_moment_trajectory(semi), oracle, 1e-8)
    assert report.passed, report.deviations


@pytest.mark.parametrize("zeta, g_b, n_m_b", [(0.3, 0.5, 75.0), (0.99, 5.0, 75.0), (0.5, 2.0, 1.0)])
def test_squeezed_ansatz_solves_the_moment_equations(zeta, g_b, n_m_b):
    pump = PumpProfile.constant(Sideband.BLUE, g_b)
    t = np.linspace(0.0, 3.0, 31)
    semi, _ = evolve_tmsts(zeta, 0.0, n_m_b, pump, 3.0, t_eval=t)
    p = SystemParams.from_dimensionless(zeta, 0.0, n_m_b)
    oracle = evolve_moments(p, pump, MomentSet(0.0, n_m_b), 3.0, t)
    report = compare_trajectories(tmsts_moment_trajectory(semi, semi.flags["phi_S"]), oracle, 1e-8)
    assert report.passed, report.deviations


def test_moment_variance_equals_the_squeezed_closed_form():
    s = TmstsState(1.5, 2.5, 0.7)
    m = MomentSet.from_blue_vector(tmsts_to_moments(s))
    assert m.min_correlation_variance() == pytest.approx(corr_variance(s), rel=1e-12)
    assert m.correlation_variance(0.0, 0.5 * math.pi) == pytest.approx(corr_variance(s), rel=1e-12)


def test_blue_moment_steady_state_matches_the_closed_form():
    zeta, g_b = 0.3, 0.5
    p = SystemParams.from_dimensionless(zeta, 0.0, 75.0)
    traj = evolve_moments(p, PumpProfile.constant(Sideband.BLUE, g_b), MomentSet(0.0, 75.0), 60.0, [60.0])
    *_, d2 = tmsts_steady_state(g_b, zeta, 37.5, 75.0)
    assert traj.observables["delta12sq"][-1] == pytest.approx(d2, rel=1e-8)


@settings(max_examples=200)
@given(populations, populations, st.floats(min_value=-1.5, max_value=1.5), angles)
def test_beam_split_map_round_trips(n_c, n_m, theta, phi):
    s = BtsState(n_c, n_m, theta, phi)
    back = moments_to_bts(bts_to_moments(s), previous=s)
    np.testing.assert_allclose(bts_to_moments(back), bts_to_moments(s), atol=1e-9)
    assert bts_populations(back) == (pytest.approx(bts_populations(s)[0], abs=1e-9), pytest.approx(bts_populations(s)[1], abs=1e-9))


@given(populations, populations, st.floats(min_value=0.0, max_value=3.0))
def test_squeezed_map_round_trips(n_c, n_m, u):
    s = TmstsState(n_c, n_m, u)
    back = moments_to_tmsts(tmsts_to_moments(s))
    assert back.u == pytest.approx(u, abs=1e-7)
    assert back.n_c_th == pytest.approx(n_c, abs=1e-6 * (1 + n_c) * math.cosh(2 * u))
    assert back.n_m_th == pytest.approx(n_m, abs=1e-6 * (1 + n_m) * math.cosh(2 * u))


@given(populations, populations, st.floats(min_value=-1.5, max_value=1.5), angles, st.floats(min_value=0, max_value=3))
def test_ansatz_states_satisfy_the_uncertainty_relation(n_c, n_m, theta, phi, u):
    assert uncertainty_margin(MomentSet.from_red_vector(bts_to_moments(BtsState(n_c, n_m, theta, phi)))) >= -1e-9
    scale = math.cosh(2 * u) * (1 + n_c + n_m)
    assert uncertainty_margin(MomentSet.from_blue_vector(tmsts_to_moments(TmstsState(n_c, n_m, u)))) >= -1e-12 * scale


def test_uncertainty_relation_flags_unphysical_moments():
    assert uncertainty_margin(MomentSet(0.0, 0.0, S=0.5)) < 0


def test_vacuum_fock_moments():
    m, var = moments_from_fock(FockDensity.thermal(0.0, 0.0, (4, 4)))
    assert (m.N_c, m.N_m, m.C, m.S) == (0.0, 0.0, 0.0, 0.0)
    assert var == pytest.approx(1.0)


def test_thermal_fock_moments():
    m, _ = moments_from_fock(FockDensity.thermal(0.3, 0.2, (thermal_dim(0.3), thermal_dim(0.3))))
    assert m.N_c == pytest.approx(0.3, rel=1e-6)
    assert m.N_m == pytest.approx(0.2, rel=1e-6)
    assert m.C == 0 and m.S == 0


def test_squeezed_fock_state_matches_closed_forms():
    s = TmstsState(0.1, 0.05, 0.3)
    m, var = moments_from_fock(tmsts_density(s, (24, 24)), 0.0, 0.5 * math.pi)
    n_c, n_m = tmsts_populations(s)
    assert m.N_c == pytest.approx(n_c, rel=1e-8)
    assert m.N_m == pytest.approx(n_m, rel=1e-8)
    assert var == pytest.approx(corr_variance(s), rel=1e-8)


def test_vacuum_is_stationary_without_pump():
    p = SystemParams.from_dimensionless(0.5)
    rho = FockDensity.thermal(0.0, 0.0, (3, 3))
    assert np.max(np.abs(fock_lindblad_rhs(rho, p, PumpProfile.constant(Sideband.RED, 0.0)))) == 0.0


@pytest.mark.parametrize("sideband", [Sideband.RED, Sideband.BLUE])
def test_lindblad_rhs_preserves_trace_and_hermiticity(sideband):
    rng = np.random.default_rng(0)
    dims = (4, 5)
    n = dims[0] * dims[1]
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = FockDensity(dims, A @ A.conj().T / np.trace(A @ A.conj().T))
    p = SystemParams.from_dimensionless(0.4, 0.3, 0.7)
    d = fock_lindblad_rhs(rho, p, PumpProfile.constant(sideband, 1.3))
    assert abs(np.trace(d)) < 1e-12
    assert np.max(np.abs(d - d.conj().T)) < 1e-12


def test_single_excitation_decays_at_the_mechanical_rate():
    p = SystemParams.from_dimensionless(0.6)
    dims = (2, 2)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[1, 1] = 1.0  # |0>_c |1>_m
    t = np.linspace(0, 3, 7)
    run = evolve_fock(p, PumpProfile.constant(Sideband.RED, 0.0), FockDensity(dims, rho0), 3.0, t)
    np.testing.assert_allclose(run.trajectory.observables["N_m"], np.exp(-p.gamma_m * t), rtol=1e-9)
    assert run.trace_drift < 1e-10


def test_red_fock_run_agrees_with_the_ansatz():
    zeta, g_r, n_m_b = 0.8, 2.0, 0.2
    dims = (thermal_dim(n_m_b, 1e-9), thermal_dim(n_m_b, 1e-9))
    t = np.linspace(0.0, 2.0, 11)
    pump = PumpProfile.constant(Sideband.RED, g_r)
    semi = evolve_bts(zeta, 0.0, n_m_b, pump, 2.0, t_eval=t)
    p = SystemParams.from_dimensionless(zeta, 0.0, n_m_b)
    run = evolve_fock(p, pump, FockDensity.thermal(0.0, n_m_b, dims), 2.0, t)
    assert run.trusted, run.notes
    report = compare_trajectories(semi, run.trajectory, 1e-6, names=["delta12sq"])
    assert report.passed
    for a, b in (("n_c", "N_c"), ("n_m", "N_m")):
        assert np.max(np.abs(semi.observables[a] - run.trajectory.observables[b])) < 1e-6


def test_fock_evolution_keeps_the_beam_split_form():
    zeta, g_r, n_m_b = 0.8, 2.0, 0.2
    dims = (14, 14)
    pump = PumpProfile.constant(Sideband.RED, g_r)
    semi = evolve_bts(zeta, 0.0, n_m_b, pump, 1.0)
    p = SystemParams.from_dimensionless(zeta, 0.0, n_m_b)
    run = evolve_fock(p, pump, FockDensity.thermal(0.0, n_m_b, dims), 1.0, [1.0])
    analytic = bts_density(BtsState.from_array(semi.states[-1]), dims)
    assert fidelity(run.final, analytic) == pytest.approx(1.0, abs=1e-3)
    assert run.final.min_eigenvalue() > -1e-8


def test_fock_model_hamiltonian_is_hermitian():
    p = SystemParams.from_dimensionless(0.5)
    for sideband in Sideband:
        H = FockModel(p, (3, 4), sideband, phi_L=0.3, delta=0.2).hamiltonian(0.7)
        assert np.allclose(H, H.conj().T)


def test_thermal_dim_tail():
    n = 0.5
    N = thermal_dim(n)
    q = n / (1 + n)
    assert q ** N < 1e-8 <= q ** (N - 1)
    assert thermal_dim(0.0) == 2


def test_identical_trajectories_compare_to_zero():
    traj = evolve_bts(0.5, 0.0, 4.0, PumpProfile.constant(Sideband.RED, 1.0), 1.0)
    report = compare_trajectories(traj, traj, 1e-12)
    assert report.worst == 0.0 and report.passed


def test_comparison_rejects_mismatched_grids():
    a = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), {"x": np.zeros(2)})
    b = Trajectory(np.array([0.0, 0.5, 1.0]), np.zeros((3, 1)), {"x": np.zeros(3)})
    with pytest.raises(ValueError):
        compare_trajectories(a, b, 1e-6)
    c = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), {"y": np.zeros(2)})
    with pytest.raises(ValueError):
        compare_trajectories(a, c, 1e-6)


def test_comparison_normalises_large_observables():
    a = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), {"x": np.array([100.0, 200.0])})
    b = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), {"x": np.array([100.0, 202.0])})
    assert compare_trajectories(a, b, 1e-6).deviations["x"] == pytest.approx(2.0 / 202.0)
