"""Cool-then-entangle protocol and its pump-strength optimisers.

The mechanical mode is first cooled by a strong red-sideband pump.  Once the
mixing angle has relaxed, a blue-sideband pump squeezes the two modes and the
correlation variance dips below one for a finite time before above-threshold
gain heats the system again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .blue import blue_threshold, corr_variance, corr_variance_rhs, evolve_tmsts
from .core import (
    BtsState,
    DegenerateSteadyStateError,
    DomainError,
    HorizonError,
    InfeasibleError,
    PumpProfile,
    Sideband,
    TmstsState,
    Trajectory,
)
from .integrate import Direction, Event, IntegratorConfig
from .red import bts_populations, bts_steady_state, effective_temperature, evolve_bts, strong_field_population

DEFAULT_HORIZON = 20.0
DEFAULT_G_CAP = 1e3
# squeeze amplitude at which a runaway integration is stopped
U_CAP = 30.0
# summed thermal population at which a runaway blue stage is stopped
N_CAP = 1e12
SCAN_POINTS = 12


@dataclass(frozen=True)
class SchemeConfig:
    """Parameters of one cool-then-entangle run.

    ``g_r=None`` starts the blue stage from the strong-field cooling limit.
    ``relax_time`` integrates the undriven relaxation between the two pumps
    (mixing-angle decay and rethermalisation) instead of assuming it is
    instantaneous.  ``pump_off`` switches the blue pump off at that time.
    """

    zeta: float
    n_m_b: float
    g_b: float
    n_c_b: float = 0.0
    g_r: float | None = None
    target: float = 1.0
    horizon: float = DEFAULT_HORIZON
    relax_time: float = 0.0
    pump_off: float | None = None
    cooled: bool = True

    def __post_init__(self):
        if not (0.0 <= self.zeta <= 1.0):
            raise DomainError("the scheme needs 0 <= zeta <= 1")
        if not (0.0 < self.target <= 1.0):
            raise DomainError("target variance must lie in (0, 1]")
        if self.g_b < 0 or (self.g_r is not None and self.g_r < 0):
            raise DomainError("pump strengths must be non-negative")
        if self.horizon <= 0 or self.relax_time < 0:
            raise DomainError("horizon must be positive and relax_time non-negative")


@dataclass(frozen=True)
class SchemeResult:
    """Summary of the blue stage of a scheme run.

    Windows are the first continuous interval with the correlation variance
    below 1 (``entangled``) or below the target; a window never opened is
    reported as ``(0, 0)`` with zero duration.
    """

    delta12_min: float
    t_at_min: float
    tau_entangled: float
    tau_below_target: float
    t_enter: float
    t_exit: float
    t_enter_target: float
    t_exit_target: float
    above_threshold: bool
    runaway_stopped: bool
    t_end: float
    initial: TmstsState
    flags: dict = field(default_factory=dict)


def cooled_initial_state(
    zeta: float,
    n_m_b: float,
    n_c_b: float = 0.0,
    g_r: float | None = None,
    relax_time: float = 0.0,
    cfg: IntegratorConfig | None = None,
) -> TmstsState:
    """Unsqueezed product thermal state left behind by red-sideband cooling.

    Without ``g_r`` both modes hold the strong-field population
    ``n_bar_b - zeta delta_n_b / 2``.  With a finite ``g_r`` the steady thermal
    populations at that drive are used, with the mixing angle taken to have
    decayed to zero.  ``relax_time > 0`` instead integrates the undriven
    relaxation from the steady beam-split state and starts from the resulting
    total occupations; residual mode mixing is discarded.
    """
    if g_r is None and relax_time == 0.0:
        n = strong_field_population(zeta, n_c_b, n_m_b)
        return TmstsState(n, n, 0.0)
    if g_r is None:
        n = strong_field_population(zeta, n_c_b, n_m_b)
        start = BtsState(n, n, 0.25 * math.pi, 0.0)
    else:
        theta, n_c, n_m = bts_steady_state(g_r, zeta, n_c_b, n_m_b)
        if relax_time == 0.0:
            return TmstsState(n_c, n_m, 0.0)
        start = BtsState(n_c, n_m, theta, 0.0)
    traj = evolve_bts(zeta, n_c_b, n_m_b, PumpProfile.constant(Sideband.RED, 0.0), relax_time, initial=start, cfg=cfg)
    n_c, n_m = bts_populations(BtsState.from_array(traj.states[-1]))
    return TmstsState(n_c, n_m, 0.0)


def _variance_rate(y, zeta, g, n_c_b, n_m_b):
    return corr_variance_rhs(
        corr_variance(y), y[1] - y[0], zeta, g, 0.5 * (n_c_b + n_m_b), n_m_b - n_c_b
    )


def _window(crossings, thr, d0, slope0, t0, name):
    """First interval below ``thr`` from the list of located crossings."""
    below = d0 < thr or (d0 == thr and slope0 < 0)
    enter = t0 if below else None
    for c in crossings:
        if c.event.name != name:
            continue
        if enter is None and not c.rising:
            enter = c.t
        elif enter is not None and c.rising:
            return enter, c.t
    return enter, None


def run_scheme(cfg: SchemeConfig, icfg: IntegratorConfig | None = None) -> tuple[Trajectory, SchemeResult]:
    """Integrate the blue stage from the cooled (or equilibrium) start.

    The run stops when the correlation variance climbs back through 1, at the
    horizon, or on runaway: the squeeze amplitude reaching ``U_CAP`` or the
    summed thermal populations reaching ``N_CAP``.

    Raises
    ------
    HorizonError
        A threshold window is still open when the run stops.
    """
    traj, res = _blue_stage(cfg, icfg)
    if math.isnan(res.t_exit) or math.isnan(res.t_exit_target):
        which = "entanglement" if math.isnan(res.t_exit) else "target"
        raise HorizonError(
            f"{which} window still open at t~={res.t_end:.6g} (horizon {cfg.horizon}); extend the horizon"
        )
    return traj, res


def _blue_stage(cfg: SchemeConfig, icfg: IntegratorConfig | None = None) -> tuple[Trajectory, SchemeResult]:
    zeta, ncb, nmb = cfg.zeta, cfg.n_c_b, cfg.n_m_b
    if cfg.cooled:
        init = cooled_initial_state(zeta, nmb, ncb, cfg.g_r, cfg.relax_time, icfg)
    else:
        init = TmstsState(ncb, nmb, 0.0)
    segments = [(0.0, cfg.g_b)]
    if cfg.pump_off is not None:
        segments.append((cfg.pump_off, 0.0))
    pump = PumpProfile(Sideband.BLUE, tuple(segments))

    def rate(t, y):
        return _variance_rate(y, zeta, pump.g_at(t), ncb, nmb)

    events = [
        Event(lambda t, y: corr_variance(y), 1.0, Direction.BOTH, name="entangled"),
        Event(lambda t, y: corr_variance(y), 1.0, Direction.RISING, terminal=True, name="exit"),
        Event(rate, 0.0, Direction.RISING, name="minimum"),
    ]
    if cfg.target < 1.0:
        events.append(Event(lambda t, y: corr_variance(y), cfg.target, Direction.BOTH, name="target"))
    traj, crossings = evolve_tmsts(
        zeta, ncb, nmb, pump, cfg.horizon, initial=init, cfg=icfg, events=events, u_cap=U_CAP, n_cap=N_CAP
    )

    d0 = corr_variance(init.as_array())
    slope0 = rate(0.0, init.as_array())
    t_end = float(traj.times[-1])

    candidates = [(float(v), float(t)) for t, v in zip(traj.times, traj.observables["delta12sq"])]
    candidates += [(corr_variance(c.y), c.t) for c in crossings if c.event.name == "minimum"]
    d_min, t_min = min(candidates)

    def window(thr, name):
        enter, exit_ = _window(crossings, thr, d0, slope0, 0.0, name)
        if enter is None:
            return 0.0, 0.0, 0.0
        if exit_ is None:
            return enter, math.nan, math.nan
        return enter, exit_, exit_ - enter

    e_in, e_out, tau_e = window(1.0, "entangled")
    if cfg.target < 1.0:
        t_in, t_out, tau_t = window(cfg.target, "target")
    else:
        t_in, t_out, tau_t = e_in, e_out, tau_e
    result = SchemeResult(
        delta12_min=d_min,
        t_at_min=t_min,
        tau_entangled=tau_e,
        tau_below_target=tau_t,
        t_enter=e_in,
        t_exit=e_out,
        t_enter_target=t_in,
        t_exit_target=t_out,
        above_threshold=cfg.g_b >= blue_threshold(zeta),
        runaway_stopped=bool(traj.flags["runaway"]),
        t_end=t_end,
        initial=init,
        flags={"initial_slope": slope0},
    )
    return traj, result


def entanglement_window(traj: Trajectory, threshold: float = 1.0) -> tuple[float, float, float]:
    """First interval on which the correlation variance of ``traj`` is below ``threshold``.

    Crossings are bracketed on the samples and refined with Brent's method on
    the dense output when available (linear interpolation otherwise).
    Returns ``(t_enter, t_exit, tau)``, or zeros if the variance never drops
    below the threshold.

    Raises
    ------
    HorizonError
        The trajectory ends inside the window.
    """
    t = traj.times
    f = np.asarray(traj.observables["delta12sq"], dtype=float) - threshold

    def root(a, b):
        return brentq(lambda s: traj.observable_at("delta12sq", s) - threshold, a, b, xtol=1e-12)

    below = np.flatnonzero(f < 0)
    if below.size == 0:
        return 0.0, 0.0, 0.0
    i = below[0]
    enter = t[0] if i == 0 else root(t[i - 1], t[i])
    above = np.flatnonzero(f[i:] >= 0)
    if above.size == 0:
        raise HorizonError(f"window below {threshold} still open at t~={t[-1]:.6g}")
    j = i + above[0]
    exit_ = t[j] if f[j] == 0 else root(t[j - 1], t[j])
    return float(enter), float(exit_), float(exit_ - enter)


def g_bound(zeta: float, n_m_b: float, target: float) -> float:
    """Lower bound ``[(1 - zeta) n_m_b + 1]/target - 1`` on the blue strength
    needed to reach ``target`` from a strongly cooled start (cold microwave bath).

    At the minimum of the dip the variance rate vanishes, so
    ``(1 + g) target >= (1 - zeta) n_m_b + 1 + zeta delta_n_th`` with a
    non-negative population difference.
    """
    if not (0 < target <= 1):
        raise DomainError("target must lie in (0, 1]")
    return ((1 - zeta) * n_m_b + 1) / target - 1


def g_bound_shifted(zeta: float, n_m_b: float, target: float) -> float:
    """The same bound with ``+ 1`` in place of ``- 1``, kept for comparison.

    This variant is not a lower bound on the required strength for moderate
    targets; see :func:`g_bound`.
    """
    if not (0 < target <= 1):
        raise DomainError("target must lie in (0, 1]")
    return ((1 - zeta) * n_m_b + 1) / target + 1


def min_variance(zeta: float, n_m_b: float, g_b: float, horizon: float = DEFAULT_HORIZON, n_c_b: float = 0.0) -> float:
    """Lowest correlation variance reached from the strongly cooled start."""
    _, res = _blue_stage(SchemeConfig(zeta, n_m_b, g_b, n_c_b=n_c_b, horizon=horizon))
    return res.delta12_min


def find_g_min(
    zeta: float,
    n_m_b: float,
    target: float,
    horizon: float = DEFAULT_HORIZON,
    g_cap: float = DEFAULT_G_CAP,
    n_c_b: float = 0.0,
    rel_tol: float = 1e-4,
) -> float:
    """Smallest blue strength whose dip reaches ``target``.

    A log-spaced scan brackets the first feasible strength, then bisection
    narrows it to ``rel_tol``.

    Raises
    ------
    InfeasibleError
        No strength up to ``g_cap`` reaches the target.
    """
    if not (0 < target <= 1):
        raise DomainError("target must lie in (0, 1]")

    def ok(g):
        return min_variance(zeta, n_m_b, g, horizon, n_c_b) <= target

    if ok(0.0):
        return 0.0
    lo = 0.0
    hi = None
    for g in np.geomspace(1e-3, g_cap, 25):
        if ok(g):
            hi = float(g)
            break
        lo = float(g)
    if hi is None:
        raise InfeasibleError(f"target {target} not reached for any g_b <= {g_cap}")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class OptimumResult:
    """Strength maximising the time below target, with the scan behind it."""

    g_opt: float
    tau_max: float
    g_min: float
    scan_g: np.ndarray
    scan_tau: np.ndarray
    multimodal: bool


def tau_below(zeta: float, n_m_b: float, target: float, g_b: float, horizon: float = DEFAULT_HORIZON, n_c_b: float = 0.0) -> float:
    """Time spent below ``target`` during the blue stage at strength ``g_b``."""
    _, res = run_scheme(SchemeConfig(zeta, n_m_b, g_b, n_c_b=n_c_b, target=target, horizon=horizon))
    return res.tau_below_target


def find_g_opt(
    zeta: float,
    n_m_b: float,
    target: float,
    horizon: float = DEFAULT_HORIZON,
    g_cap: float = DEFAULT_G_CAP,
    n_c_b: float = 0.0,
    rel_tol: float = 1e-3,
) -> OptimumResult:
    """Blue strength that keeps the variance below ``target`` the longest.

    Scans ``SCAN_POINTS`` log-spaced strengths in ``(g_min, g_cap]``, then
    refines the best bracket by golden-section search.  When the scan shows
    more than one interior peak the global scan maximum is refined and
    ``multimodal`` is set.
    """
    g_min = find_g_min(zeta, n_m_b, target, horizon, g_cap, n_c_b)
    lo = max(g_min, 1e-6)
    grid = np.geomspace(lo, g_cap, SCAN_POINTS + 1)[1:]
    taus = np.array([tau_below(zeta, n_m_b, target, g, horizon, n_c_b) for g in grid])
    if not np.any(taus > 0):
        raise InfeasibleError("no strength in the scan keeps the variance below target")
    peaks = [i for i in range(1, len(taus) - 1) if taus[i] > taus[i - 1] and taus[i] >= taus[i + 1]]
    k = int(np.argmax(taus))
    a = grid[k - 1] if k > 0 else lo
    c = grid[k + 1] if k < len(grid) - 1 else grid[k]
    if c > a:
        res = minimize_scalar(
            lambda g: -tau_below(zeta, n_m_b, target, g, horizon, n_c_b),
            bracket=(a, grid[k], c) if a < grid[k] < c else None,
            bounds=None,
            method="golden",
            tol=rel_tol,
        )
        g_opt, tau_max = float(res.x), float(-res.fun)
        if tau_max < taus[k]:
            g_opt, tau_max = float(grid[k]), float(taus[k])
    else:
        g_opt, tau_max = float(grid[k]), float(taus[k])
    return OptimumResult(g_opt, tau_max, g_min, grid, taus, len(peaks) > 1)


def sweep_cooling_heatmap(
    zeta_grid: Sequence[float],
    g_r_grid: Sequence[float],
    n_m_b: float,
    n_c_b: float = 0.0,
    omega_m: float = 2 * math.pi * 10e6,
) -> np.ndarray:
    """Steady mechanical effective temperature (K) on a ``zeta x g_r`` grid.

    Row ``i`` is ``zeta_grid[i]``; cells without a steady state are NaN.
    """
    out = np.full((len(zeta_grid), len(g_r_grid)), np.nan)
    for i, zeta in enumerate(zeta_grid):
        for j, g in enumerate(g_r_grid):
            try:
                _, _, n_m = bts_steady_state(g, zeta, n_c_b, n_m_b)
            except DegenerateSteadyStateError:
                continue
            out[i, j] = effective_temperature(n_m, omega_m)
    return out
