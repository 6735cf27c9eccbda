from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech import PumpProfile, Sideband, SingularityError, SystemParams, TmstsState, UnstableRegimeError
from optomech.blue import (
    blue_threshold,
    corr_variance,
    corr_variance_rhs,
    evolve_tmsts,
    from_scaled,
    tmsts_populations,
    tmsts_rhs,
    tmsts_rhs_bar,
    tmsts_rhs_dimensional,
    tmsts_rhs_scaled,
    tmsts_steady_state,
    to_scaled,
)
from optomech.integrate import IntegratorConfig

populations = st.floats(min_value=0.0, max_value=100.0)
squeezing = st.floats(min_value=0.0, max_value=3.0)
zetas = st.floats(min_value=0.0, max_value=1.0)
drives = st.floats(min_value=0.0, max_value=5.0)


def blue(g):
    return PumpProfile.constant(Sideband.BLUE, g)


def test_undriven_equilibrium_is_stationary():
    assert np.all(tmsts_rhs(TmstsState(2.0, 75.0), 0.6, 0.0, 2.0, 75.0) == 0.0)


@given(populations, populations, zetas)
def test_unsqueezed_start_grows_at_half_the_drive(n_c, n_m, zeta):
    assert tmsts_rhs(TmstsState(n_c, n_m, 0.0), zeta, 1.2, 0.0, 75.0)[2] == pytest.approx(0.6)


@settings(max_examples=200)
@given(populations, populations, squeezing, zetas, drives, populations, populations)
def test_mean_difference_form_is_a_change_of_variables(n_c, n_m, u, zeta, g, n_c_b, n_m_b):
    d = tmsts_rhs(TmstsState(n_c, n_m, u), zeta, g, n_c_b, n_m_b)
    bar = tmsts_rhs_bar(0.5 * (n_c + n_m), n_m - n_c, u, zeta, g, 0.5 * (n_c_b + n_m_b), n_m_b - n_c_b)
    expected = np.array([0.5 * (d[0] + d[1]), d[1] - d[0], d[2]])
    np.testing.assert_allclose(bar, expected, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(expected))))


@settings(max_examples=200)
@given(populations, populations, squeezing, zetas, drives, populations, populations)
def test_scaled_form_is_a_change_of_variables(n_c, n_m, u, zeta, g, n_c_b, n_m_b):
    n_bar_b, delta_n_b = 0.5 * (n_c_b + n_m_b), n_m_b - n_c_b
    w = 2 * n_bar_b + 1
    n_bar, delta_n = 0.5 * (n_c + n_m), n_m - n_c
    bar = tmsts_rhs_bar(n_bar, delta_n, u, zeta, g, n_bar_b, delta_n_b)
    scaled = tmsts_rhs_scaled(*to_scaled(n_bar, delta_n, n_bar_b, delta_n_b), u, zeta, g)
    expected = np.array([bar[0] / w, bar[1] / w, bar[2]])
    np.testing.assert_allclose(scaled, expected, rtol=1e-10, atol=1e-10 * max(1.0, np.max(np.abs(expected))))


@given(populations, st.floats(min_value=-50, max_value=50), populations, st.floats(min_value=-50, max_value=50))
def test_scaled_variables_round_trip(n_bar, delta_n, n_bar_b, delta_n_b):
    back = from_scaled(*to_scaled(n_bar, delta_n, n_bar_b, delta_n_b), n_bar_b, delta_n_b)
    assert back == (pytest.approx(n_bar, abs=1e-9), pytest.approx(delta_n, abs=1e-9))


def test_scaled_equilibrium_is_stationary():
    assert np.all(tmsts_rhs_scaled(0.0, 0.0, 0.0, 0.7, 0.0) == 0.0)


def test_large_squeezing_is_dominated_by_the_cosh_term():
    d = tmsts_rhs_scaled(0.0, 0.0, 4.0, 0.5, 1.0)
    assert d[0] > 0
    assert d[0] == pytest.approx(0.5 * math.cosh(8.0), rel=1e-3)


def test_scaled_trajectories_do_not_depend_on_the_bath():
    cfg = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)
    t = np.linspace(0.0, 10.0, 51)
    runs = []
    for n_m_b in (10.0, 75.0):
        traj, _ = evolve_tmsts(0.6, 0.0, n_m_b, blue(0.5), 10.0, cfg=cfg, t_eval=t)
        n_bar_b, delta_n_b = 0.5 * n_m_b, n_m_b
        rows = [
            (*to_scaled(0.5 * (y[0] + y[1]), y[1] - y[0], n_bar_b, delta_n_b), y[2]) for y in traj.states
        ]
        runs.append(np.array(rows))
    assert np.max(np.abs(runs[0] - runs[1])) < 1e-10


@pytest.mark.parametrize(
    "state, expected",
    [
        (TmstsState(0.0, 0.0, 0.0), 1.0),
        (TmstsState(0.0, 0.0, 0.5), math.exp(-1)),
        (TmstsState(37.5, 37.5, 1.0), 76 * math.exp(-2)),
        (TmstsState(3.0, 1.0, 0.0), 5.0),
    ],
)
def test_correlation_variance_reference_values(state, expected):
    assert corr_variance(state) == pytest.approx(expected, rel=1e-14)


@given(populations, populations, squeezing)
def test_correlation_variance_is_positive(n_c, n_m, u):
    assert corr_variance(TmstsState(n_c, n_m, u)) > 0


@given(populations, populations, squeezing)
def test_squeezed_populations_balance(n_c, n_m, u):
    a, b = tmsts_populations(TmstsState(n_c, n_m, u))
    assert a - b == pytest.approx(n_c - n_m, abs=1e-9 * max(1.0, a))


def test_variance_rate_reference_values():
    assert corr_variance_rhs(76.0, 75.0, 0.5, 0.0, 37.5, 75.0) == 0.0
    assert corr_variance_rhs(1.0, 0.0, 1.0, 5.0, 37.5, 75.0) == pytest.approx(-5.0)


@pytest.mark.parametrize("zeta, g_b, n_c_b, n_m_b", [(0.99, 5.0, 0.0, 75.0), (0.3, 0.5, 1.0, 10.0), (0.8, 0.2, 0.0, 4.0)])
def test_variance_rate_matches_the_integrated_variance(zeta, g_b, n_c_b, n_m_b):
    init = TmstsState(0.4, 0.4, 0.0)
    traj, _ = evolve_tmsts(zeta, n_c_b, n_m_b, blue(g_b), 1.0, initial=init, t_eval=np.linspace(0.05, 0.95, 10))
    h = 1e-4
    for t, y in zip(traj.times, traj.states):
        numeric = (traj.observable_at("delta12sq", t + h) - traj.observable_at("delta12sq", t - h)) / (2 * h)
        analytic = corr_variance_rhs(corr_variance(y), y[1] - y[0], zeta, g_b, 0.5 * (n_c_b + n_m_b), n_m_b - n_c_b)
        assert numeric == pytest.approx(analytic, rel=1e-6, abs=1e-6)


def test_identical_modes_reduce_to_a_single_variance_equation():
    g_b, n_b = 0.4, 5.0
    w = 2 * n_b + 1
    traj, _ = evolve_tmsts(0.0, n_b, n_b, blue(g_b), 4.0, t_eval=np.linspace(0, 4, 41))
    np.testing.assert_allclose(traj.states[:, 0], traj.states[:, 1], atol=1e-9)
    k = 1 + g_b
    expected = w / k + (w - w / k) * np.exp(-k * traj.times)
    np.testing.assert_allclose(traj.observables["delta12sq"], expected, rtol=1e-8)


@pytest.mark.parametrize("zeta, expected", [(0.0, 1.0), (1.0, 0.0), (0.8, 0.6)])
def test_blue_threshold(zeta, expected):
    assert blue_threshold(zeta) == pytest.approx(expected, abs=1e-15)


def test_steady_state_without_drive_is_the_bath():
    u, n_bar, delta_n, d2 = tmsts_steady_state(0.0, 0.4, 20.0, 30.0)
    assert (u, n_bar, delta_n, d2) == (0.0, pytest.approx(20.0), pytest.approx(30.0), pytest.approx(41.0))


def test_steady_variance_for_matched_losses():
    assert tmsts_steady_state(0.5, 0.0, 37.5, 75.0)[3] == pytest.approx(76 * 0.5 / 0.75)


@pytest.mark.parametrize("zeta", [0.0, 0.5, 0.9])
@pytest.mark.parametrize("fraction", [0.0, 0.3, 0.7])
def test_steady_state_is_a_fixed_point(zeta, fraction):
    g_b = 0.3 if fraction == 0.3 else fraction * blue_threshold(zeta)
    n_bar_b, delta_n_b = 37.5, 75.0
    u, n_bar, delta_n, d2 = tmsts_steady_state(g_b, zeta, n_bar_b, delta_n_b)
    residual = tmsts_rhs_bar(n_bar, delta_n, u, zeta, g_b, n_bar_b, delta_n_b)
    assert np.max(np.abs(residual)) < 1e-10
    assert d2 == pytest.approx((2 * n_bar + 1) * math.exp(-2 * u), rel=1e-12)


@pytest.mark.parametrize("zeta, g_b", [(0.0, 1.0), (0.8, 0.6), (0.9, 2.0)])
def test_steady_state_rejects_the_unstable_regime(zeta, g_b):
    with pytest.raises(UnstableRegimeError):
        tmsts_steady_state(g_b, zeta, 37.5, 75.0)


def test_integration_reaches_the_steady_state():
    zeta, g_b = 0.3, 0.5
    traj, _ = evolve_tmsts(zeta, 0.0, 75.0, blue(g_b), 60.0)
    u, n_bar, delta_n, d2 = tmsts_steady_state(g_b, zeta, 37.5, 75.0)
    y = traj.states[-1]
    assert y[2] == pytest.approx(u, abs=1e-8)
    assert 0.5 * (y[0] + y[1]) == pytest.approx(n_bar, rel=1e-8)
    assert y[1] - y[0] == pytest.approx(delta_n, rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(zetas, drives)
def test_squeezing_stays_non_negative(zeta, g_b):
    traj, _ = evolve_tmsts(zeta, 0.0, 10.0, blue(g_b), 3.0, u_cap=20.0)
    assert np.min(traj.states[:, 2]) >= 0.0
    assert np.min(traj.states[:, :2]) >= -1e-9


def test_above_threshold_from_equilibrium_never_entangles():
    zeta = 0.9
    traj, _ = evolve_tmsts(zeta, 0.0, 75.0, blue(2 * blue_threshold(zeta)), 20.0, u_cap=30.0)
    assert np.min(traj.observables["delta12sq"]) >= 1.0


def test_runaway_is_capped():
    traj, _ = evolve_tmsts(0.0, 0.0, 1.0, blue(3.0), 50.0, u_cap=5.0)
    assert traj.flags["runaway"]
    assert traj.times[-1] < 50.0
    assert traj.states[-1, 2] == pytest.approx(5.0, abs=1e-8)


def test_dimensional_rates_are_rescaled_dimensionless_rates():
    rng = np.random.default_rng(3)
    p = SystemParams(kappa=1e5, gamma_m=1e3, n_c_bath=0.5, n_m_bath=40.0, gamma0=30.0)
    gp = p.gamma_plus
    for _ in range(50):
        s = TmstsState(*rng.uniform(0, 50, 2), rng.uniform(0, 2), -0.5 * math.pi)
        g_b = rng.uniform(0, 3)
        dim = tmsts_rhs_dimensional(s, p, g_b * gp / (2 * p.gamma0), 0.0)
        ref = tmsts_rhs(s, p.zeta, g_b, p.n_c_bath, p.n_m_bath)
        np.testing.assert_allclose(dim[:3] / gp, ref, rtol=1e-12, atol=1e-12 * np.max(np.abs(ref)))
        assert abs(dim[3]) < 1e-12 * gp


def test_dimensional_phase_rate_is_singular_for_an_in_phase_drive():
    p = SystemParams(kappa=2.0, gamma_m=1.0, gamma0=1.0)
    with pytest.raises(SingularityError):
        tmsts_rhs_dimensional(TmstsState(0.0, 0.0, 0.0, 0.0), p, 1.0, 0.0)
