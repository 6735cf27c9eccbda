"""Red-sideband (cooling) dynamics of the beam-split thermal state.

State vectors are ordered ``(n_c_th, n_m_th, theta, phi_B)`` and evolve in
dimensionless time.  The phase ``phi_B`` is measured relative to the pump phase.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import (
    BtsState,
    DegenerateSteadyStateError,
    DomainError,
    PumpProfile,
    Sideband,
    SingularityError,
    SystemParams,
    Trajectory,
    check_dimensionless,
    temperature_from_occupation,
)
from .integrate import IntegratorConfig, integrate

STATE_NAMES = ("n_c_th", "n_m_th", "theta", "phi_B")

# below this mixing angle the phase equation uses its small-angle limit
THETA_SERIES = 1e-6
# moment-representation window used to bridge a near crossing of the populations
CROSSING_WINDOW = 0.05


def bts_rhs(
    s: BtsState | Sequence[float],
    zeta: float,
    g_r: float,
    detuning_ratio: float,
    n_c_b: float,
    n_m_b: float,
) -> np.ndarray:
    """Time derivatives of ``(n_c_th, n_m_th, theta, phi_B)`` per unit ``t~``.

    ``detuning_ratio`` is ``Delta_+ / Gamma_+``.  The phase rate is
    ``Delta_+/Gamma_+ - g_r sin(phi_B) / tan(2 theta)``; this is the form that
    reproduces the second-moment equations of the master equation exactly.
    """
    if isinstance(s, BtsState):
        n_c, n_m, theta, phi = s.n_c_th, s.n_m_th, s.theta, s.phi_B
    else:
        n_c, n_m, theta, phi = (float(v) for v in s)
    c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
    cos2t, sin2t = math.cos(2 * theta), math.sin(2 * theta)

    dn_c = (1 + zeta) * n_c_b * c2 + (1 - zeta) * n_m_b * s2 - (1 + zeta * cos2t) * n_c
    dn_m = (1 - zeta) * n_m_b * c2 + (1 + zeta) * n_c_b * s2 - (1 - zeta * cos2t) * n_m

    n_bar_b = 0.5 * (n_c_b + n_m_b)
    delta_n_b = n_m_b - n_c_b
    n_bar = 0.5 * (n_c + n_m)
    delta_n = n_m - n_c
    drive = 0.5 * g_r * math.cos(phi)
    if sin2t == 0.0:
        dtheta = drive
    elif delta_n == 0.0:
        raise SingularityError("mixing-angle rate diverges at equal thermal populations", None, [n_c, n_m, theta, phi])
    else:
        dtheta = drive + (2 * zeta * (n_bar_b - n_bar) - delta_n_b) / delta_n * 0.5 * sin2t

    if abs(theta) < THETA_SERIES:
        # sin(phi)/tan(2 theta) ~ sin(phi) / (2 theta); at theta = 0 use the launch
        # limit of a trajectory starting from phi_B = 0, where phi_B ~ theta * Delta/g
        if theta != 0.0:
            ratio = math.sin(phi) / (2 * theta)
        elif g_r > 0:
            ratio = 0.5 * detuning_ratio / g_r
        else:
            ratio = 0.0
    else:
        ratio = math.sin(phi) / math.tan(2 * theta)
    dphi = detuning_ratio - g_r * ratio

    out = np.array([dn_c, dn_m, dtheta, dphi])
    if not np.all(np.isfinite(out)):
        raise SingularityError("non-finite BTS derivative", None, [n_c, n_m, theta, phi])
    return out


def bts_rhs_dimensional(
    s: BtsState | Sequence[float],
    p: SystemParams,
    alpha0: float,
    phi_L: float = 0.0,
    Delta: float | None = None,
) -> np.ndarray:
    """Derivatives in s^-1 with physical rates.

    ``alpha0`` is the real pump amplitude, ``phi_L`` its phase and ``Delta`` the
    laser-cavity detuning ``omega_L - omega_c``; ``None`` means exactly on the
    red sideband.  Here ``phi_B`` is the absolute interaction phase.
    """
    if isinstance(s, BtsState):
        n_c, n_m, theta, phi = s.n_c_th, s.n_m_th, s.theta, s.phi_B
    else:
        n_c, n_m, theta, phi = (float(v) for v in s)
    if Delta is None:
        delta_plus = 0.0
    else:
        if p.omega_m is None:
            raise DomainError("omega_m is required to evaluate a detuned pump")
        delta_plus = Delta + p.omega_m
    kappa, gm = p.kappa, p.gamma_m
    ncb, nmb = p.n_c_bath, p.n_m_bath
    c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
    G = p.gamma0 * alpha0

    dn_c = kappa * (ncb - n_c) * c2 + gm * (nmb - n_c) * s2
    dn_m = gm * (nmb - n_m) * c2 + kappa * (ncb - n_m) * s2
    dtheta = G * math.cos(phi - phi_L)
    if math.sin(2 * theta) != 0.0:
        if n_m == n_c:
            raise SingularityError("mixing-angle rate diverges at equal thermal populations", None, [n_c, n_m, theta, phi])
        loss = kappa * ncb - gm * nmb - p.gamma_minus * (n_c + n_m)
        dtheta += 0.5 * math.sin(2 * theta) * loss / (n_m - n_c)
    if abs(theta) < THETA_SERIES:
        if theta != 0.0:
            ratio = math.sin(phi - phi_L) / (2 * theta)
        elif G > 0:
            ratio = 0.25 * delta_plus / G
        else:
            ratio = 0.0
    else:
        ratio = math.sin(phi - phi_L) / math.tan(2 * theta)
    dphi = delta_plus - 2 * G * ratio
    return np.array([dn_c, dn_m, dtheta, dphi])


def bts_populations(s: BtsState) -> tuple[float, float]:
    """Total occupations ``(n_c, n_m)`` of the mixed modes."""
    c2, s2 = math.cos(s.theta) ** 2, math.sin(s.theta) ** 2
    n_c = s.n_c_th * c2 + s.n_m_th * s2
    n_m = s.n_m_th * c2 + s.n_c_th * s2
    return n_c, n_m


def bts_steady_state(g_r: float, zeta: float, n_c_b: float, n_m_b: float) -> tuple[float, float, float]:
    """Steady mixing angle and thermal populations at constant resonant drive.

    Returns ``(theta_ss, n_c_th_ss, n_m_th_ss)`` with ``theta_ss`` in ``[0, pi/4)``.
    """
    if g_r < 0:
        raise DomainError("g_r must be non-negative")
    theta = 0.5 * math.atan(g_r)
    cos2t = math.cos(2 * theta)
    c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
    den_c = 1 + zeta * cos2t
    den_m = 1 - zeta * cos2t
    if den_c == 0.0 or den_m == 0.0:
        raise DegenerateSteadyStateError(
            f"steady state undefined for g_r={g_r}, zeta={zeta} (no loss channel for one mode)"
        )
    n_c = ((1 + zeta) * n_c_b * c2 + (1 - zeta) * n_m_b * s2) / den_c
    n_m = ((1 - zeta) * n_m_b * c2 + (1 + zeta) * n_c_b * s2) / den_m
    return theta, n_c, n_m


def bts_reduced_steady(g_r: float, zeta: float, n_m_b: float) -> tuple[float, float]:
    """Steady ``(delta_n_th, n_bar_th)`` for a cold microwave bath."""
    g2 = g_r * g_r
    den = 1 + g2 - zeta * zeta
    delta_n = math.sqrt(1 + g2) * (1 - zeta * zeta) * n_m_b / den
    n_bar = 0.5 * n_m_b * (1 - zeta) * (1 + g2 + zeta) / den
    return delta_n, n_bar


def strong_field_population(zeta: float, n_c_b: float, n_m_b: float) -> float:
    """Common thermal population in the ``g_r -> infinity`` limit."""
    return 0.5 * (n_m_b + n_c_b) - 0.5 * zeta * (n_m_b - n_c_b)


def effective_temperature(n_th: float, omega: float) -> float:
    """Temperature (K) whose Bose occupation at ``omega`` equals ``n_th``.

    An empty mode (``n_th == 0``) is reported as 0 K.
    """
    return temperature_from_occupation(n_th, omega)


def bts_correlation_variance(s: BtsState, beta_c: float = 0.0, beta_m: float = 0.0) -> float:
    """Correlation variance with the beam-splitter cross term,

    ``n_m + n_c + 1 + sin(2 theta) (n_c_th - n_m_th) sin(phi_B + beta_c - beta_m)``.

    A direct evaluation of the joint quadratures in a truncated Fock basis finds
    no dependence on the quadrature phases: the cross term cancels between the
    two joint quadratures and the exact value is :func:`bts_joint_variance`.
    Both agree whenever ``phi_B + beta_c - beta_m`` is a multiple of ``pi``, and
    both are bounded below by 1.
    """
    n_c, n_m = bts_populations(s)
    cross = math.sin(2 * s.theta) * (s.n_c_th - s.n_m_th) * math.sin(s.phi_B + beta_c - beta_m)
    return n_m + n_c + 1 + cross


def bts_joint_variance(s: BtsState) -> float:
    """Phase-independent correlation variance ``n_c + n_m + 1`` of a BTS."""
    return s.n_c_th + s.n_m_th + 1.0


def _theta_decay(g_r_prev, t, rate_factor):
    if g_r_prev < 0:
        raise DomainError("g_r_prev must be non-negative")
    gamma = math.sqrt(1 + g_r_prev * g_r_prev)
    amp = 0.0 if g_r_prev == 0 else (gamma - 1) / math.sqrt(gamma * gamma - 1)
    out = np.arctan(amp * np.exp(-rate_factor * gamma * np.asarray(t, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out


def theta_decay(g_r_prev: float, t: float | np.ndarray) -> float | np.ndarray:
    """Mixing angle after the red pump is switched off at ``t~ = 0``.

    Starts from the steady angle of a prior drive ``g_r_prev`` (so
    ``tan 2 theta(0) = g_r_prev``) with the thermal populations held at their
    steady values.  The angle equation then reads
    ``d theta/dt~ = -(gamma/2) sin 2 theta`` with ``gamma = sqrt(1 + g_r_prev^2)``,
    whose solution is ``tan theta = (gamma - 1)/sqrt(gamma^2 - 1) exp(-gamma t~)``.
    """
    return _theta_decay(g_r_prev, t, 1.0)


def theta_decay_fast(g_r_prev: float, t: float | np.ndarray) -> float | np.ndarray:
    """Variant decaying as ``exp(-2 gamma t~)``, kept for comparison with
    :func:`theta_decay`; it decays twice as fast as the angle equation implies."""
    return _theta_decay(g_r_prev, t, 2.0)


def decay_rate(g_r_prev: float) -> float:
    """``gamma = sqrt(1 + g_r_prev^2)``, the rate of ``tan theta`` after switch-off."""
    return math.sqrt(1 + g_r_prev * g_r_prev)


def rethermalization_rate(n_m_th: float, zeta: float, n_m_b: float, theta: float) -> float:
    """Mechanical thermal-population rate with a cold microwave bath and no drive.

    Evaluates the population equation at mixing angle ``theta``; at
    ``theta = pi/4`` it is ``(1 - zeta)/2 n_m_b - n_m_th`` and at ``theta = 0`` it
    is ``(1 - zeta)(n_m_b - n_m_th)``.
    """
    return (1 - zeta) * n_m_b * math.cos(theta) ** 2 - (1 - zeta * math.cos(2 * theta)) * n_m_th


def bts_observables(y: Sequence[float], beta_c: float = 0.0, beta_m: float = 0.0) -> dict[str, float]:
    s = BtsState.from_array(y)
    n_c, n_m = bts_populations(s)
    return {
        "n_c": n_c,
        "n_m": n_m,
        "delta12sq": bts_correlation_variance(s, beta_c, beta_m),
        "theta": s.theta,
    }


def _unwrap_near(angle: float, ref: float, period: float) -> float:
    return angle + period * round((ref - angle) / period)


class _Partial:
    """Thin wrapper giving a plain ODE solution the segment interface."""

    def __init__(self, sol):
        self.sol = sol
        self.t = sol.t

    def __call__(self, t: float) -> np.ndarray:
        return self.sol(t)


class _Bridge:
    """Moment-representation segment mapped back onto BTS parameters."""

    def __init__(self, sol, reference: BtsState):
        from .oracle import moments_to_bts

        self.sol = sol
        self.t = sol.t
        self.reference = reference
        self._to_bts = moments_to_bts

    def __call__(self, t: float) -> np.ndarray:
        return self._to_bts(self.sol(t), previous=self.reference).as_array()

    @property
    def y_end(self) -> np.ndarray:
        return self(float(self.t[-1]))


def _bridge_crossing(y, t, t_stop, zeta, g_r, detuning, n_c_b, n_m_b, cfg) -> _Bridge:
    """Advance through a near crossing of the thermal populations with moments."""
    from .oracle import bts_to_moments, moment_rhs_red_dimensionless

    ref = BtsState.from_array(y)
    t_end = min(t + CROSSING_WINDOW, t_stop)
    sol = integrate(
        lambda tt, m: moment_rhs_red_dimensionless(m, zeta, g_r, detuning, n_c_b, n_m_b),
        bts_to_moments(ref),
        (t, t_end),
        cfg,
    )
    return _Bridge(sol, ref)


def evolve_bts(
    zeta: float,
    n_c_b: float,
    n_m_b: float,
    pump: PumpProfile,
    t_max: float,
    initial: BtsState | None = None,
    cfg: IntegratorConfig | None = None,
    t_eval: Sequence[float] | None = None,
    beta_c: float = 0.0,
    beta_m: float = 0.0,
) -> Trajectory:
    """Integrate the BTS parameters under a red-sideband pump profile.

    Starts from thermal equilibrium unless ``initial`` is given.  The mixing
    angle is reported on the branch ``(-pi, pi]``.  When the
    adaptive step collapses near a crossing of the thermal populations the
    interval is bridged with the singularity-free moment equations and the
    ansatz parameters are recovered afterwards; such bridges are listed in
    ``flags["moment_bridges"]``.
    """
    if pump.sideband is not Sideband.RED:
        raise DomainError("evolve_bts needs a red-sideband pump profile")
    check_dimensionless(zeta, n_c_b, n_m_b)
    cfg = cfg or IntegratorConfig()
    y = (initial or BtsState.equilibrium(n_c_b, n_m_b)).as_array()
    cuts = [0.0, *pump.breakpoints(0.0, t_max), t_max]
    pieces = []
    bridges: list[tuple[float, float]] = []
    for a, b in zip(cuts, cuts[1:]):
        g = pump.g_at(a)
        t = a
        while t < b:
            try:
                sol = integrate(
                    lambda tt, yy: bts_rhs(yy, zeta, g, pump.detuning, n_c_b, n_m_b),
                    y,
                    (t, b),
                    cfg,
                )
            except SingularityError as exc:
                t_fail = exc.t if exc.t is not None else t
                y_fail = exc.y if exc.y is not None else y
                if t_fail > t:
                    # keep the progress made before the collapse
                    pieces.append(_Partial(integrate(
                        lambda tt, yy: bts_rhs(yy, zeta, g, pump.detuning, n_c_b, n_m_b), y, (t, t_fail), cfg
                    )))
                bridge = _bridge_crossing(y_fail, t_fail, b, zeta, g, pump.detuning, n_c_b, n_m_b, cfg)
                pieces.append(bridge)
                bridges.append((float(bridge.t[0]), float(bridge.t[-1])))
                y = bridge.y_end
                t = float(bridge.t[-1])
                continue
            pieces.append(sol)
            y = sol.y_end
            t = b

    def dense(tt: float) -> np.ndarray:
        for sol in pieces:
            if sol.t[0] - 1e-12 <= tt <= sol.t[-1] + 1e-12:
                y = np.array(sol(tt), dtype=float)
                # theta and theta + pi describe the same state; report (-pi, pi]
                y[2] = math.pi - (math.pi - y[2]) % (2 * math.pi)
                return y
        raise ValueError(f"t={tt} not covered by the trajectory")

    if t_eval is None:
        times = np.unique(np.concatenate([sol.t for sol in pieces]))
        states = np.array([dense(tt) for tt in times])
    else:
        times = np.asarray(t_eval, dtype=float)
        states = np.array([dense(tt) for tt in times])
    obs = _collect(states, beta_c, beta_m)
    return Trajectory(
        times=times,
        states=states,
        observables=obs,
        state_names=STATE_NAMES,
        dense=dense,
        observable_fn=lambda tt, yy: bts_observables(yy, beta_c, beta_m),
        flags={"moment_bridges": bridges},
    )


def _collect(states: np.ndarray, beta_c: float, beta_m: float) -> dict[str, np.ndarray]:
    rows = [bts_observables(y, beta_c, beta_m) for y in states]
    keys = rows[0].keys() if rows else ()
    return {k: np.array([r[k] for r in rows]) for k in keys}
