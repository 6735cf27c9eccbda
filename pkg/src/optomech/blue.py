"""Blue-sideband (entangling) dynamics of the two-mode squeezed thermal state.

State vectors are ordered ``(n_c_th, n_m_th, u)``.  The squeezing phase stays at
``phi_L - pi/2`` for a resonant pump and is carried alongside, not integrated.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import (
    DomainError,
    PumpProfile,
    Sideband,
    SingularityError,
    SystemParams,
    TmstsState,
    Trajectory,
    UnstableRegimeError,
    check_dimensionless,
)
from .integrate import Event, IntegratorConfig, integrate

STATE_NAMES = ("n_c_th", "n_m_th", "u")


def _unpack(s):
    if isinstance(s, TmstsState):
        return s.n_c_th, s.n_m_th, s.u
    return float(s[0]), float(s[1]), float(s[2])


def tmsts_rhs(
    s: TmstsState | Sequence[float],
    zeta: float,
    g_b: float,
    n_c_b: float,
    n_m_b: float,
) -> np.ndarray:
    """Time derivatives of ``(n_c_th, n_m_th, u)`` per unit ``t~`` on resonance."""
    n_c, n_m, u = _unpack(s)
    c2, s2 = math.cosh(u) ** 2, math.sinh(u) ** 2
    cs = 0.5 * math.sinh(2 * u)
    dn_c = (1 + zeta) * c2 * (n_c_b - n_c) + (1 - zeta) * s2 * (n_m_b + n_c + 1)
    dn_m = (1 - zeta) * c2 * (n_m_b - n_m) + (1 + zeta) * s2 * (n_c_b + n_m + 1)
    drag = n_c_b + n_m_b + 1 + zeta * (n_c_b - n_c + n_m - n_m_b)
    du = 0.5 * g_b - cs * drag / (n_c + n_m + 1)
    out = np.array([dn_c, dn_m, du])
    if not np.all(np.isfinite(out)):
        raise SingularityError("non-finite TMSTS derivative", None, [n_c, n_m, u])
    return out


def tmsts_rhs_bar(
    n_bar_th: float,
    delta_n_th: float,
    u: float,
    zeta: float,
    g_b: float,
    n_bar_b: float,
    delta_n_b: float,
) -> np.ndarray:
    """Derivatives of ``(n_bar_th, delta_n_th, u)``, the mean and difference of
    the thermal populations (``delta = n_m - n_c``)."""
    cosh2u = math.cosh(2 * u)
    source = 2 * n_bar_b + 1 + zeta * (delta_n_th - delta_n_b)
    dn_bar = 0.5 * (cosh2u * source - (2 * n_bar_th + 1))
    ddelta = (delta_n_b - delta_n_th) - zeta * (2 * n_bar_b + 1) + (2 * n_bar_th + 1) * zeta * cosh2u
    du = 0.5 * g_b - 0.5 * math.sinh(2 * u) * source / (2 * n_bar_th + 1)
    return np.array([dn_bar, ddelta, du])


def to_scaled(n_bar_th: float, delta_n_th: float, n_bar_b: float, delta_n_b: float) -> tuple[float, float]:
    """Map mean/difference populations to bath-normalised variables."""
    w = 2 * n_bar_b + 1
    return 0.5 * ((2 * n_bar_th + 1) / w - 1), (delta_n_th - delta_n_b) / w


def from_scaled(n_bar0: float, delta_n0: float, n_bar_b: float, delta_n_b: float) -> tuple[float, float]:
    w = 2 * n_bar_b + 1
    return 0.5 * ((2 * n_bar0 + 1) * w - 1), delta_n0 * w + delta_n_b


def tmsts_rhs_scaled(n_bar0: float, delta_n0: float, u: float, zeta: float, g_b: float) -> np.ndarray:
    """Derivatives of the bath-normalised variables ``(n_bar0, delta_n0, u)``.

    With ``2 n_bar0 + 1 = (2 n_bar_th + 1)/(2 n_bar_b + 1)`` and
    ``delta_n0 = (delta_n_th - delta_n_b)/(2 n_bar_b + 1)`` the bath occupations
    drop out, so a thermal-equilibrium start (both scaled variables zero)
    evolves identically for every bath temperature.
    """
    cosh2u = math.cosh(2 * u)
    source = 1 + zeta * delta_n0
    dn_bar0 = 0.5 * (cosh2u * source - (2 * n_bar0 + 1))
    ddelta0 = zeta * (2 * n_bar0 + 1) * cosh2u - zeta - delta_n0
    du = 0.5 * g_b - 0.5 * math.sinh(2 * u) * source / (2 * n_bar0 + 1)
    return np.array([dn_bar0, ddelta0, du])


def tmsts_rhs_dimensional(
    s: TmstsState,
    p: SystemParams,
    alpha0: float,
    phi_L: float = 0.0,
    Delta: float | None = None,
) -> np.ndarray:
    """Derivatives of ``(n_c_th, n_m_th, u, phi_S)`` in s^-1.

    ``Delta`` is the laser-cavity detuning; ``None`` means exactly on the blue
    sideband.  The phase rate has a pole at ``u = 0`` unless the drive is in
    quadrature with the squeezing phase, where the rate is ``Delta - Omega_m``.
    """
    if Delta is None:
        detune = 0.0
    else:
        if p.omega_m is None:
            raise DomainError("omega_m is required to evaluate a detuned pump")
        detune = Delta - p.omega_m
    n_c, n_m, u, phi_S = s.n_c_th, s.n_m_th, s.u, s.phi_S
    kappa, gm = p.kappa, p.gamma_m
    ncb, nmb = p.n_c_bath, p.n_m_bath
    c2, s2 = math.cosh(u) ** 2, math.sinh(u) ** 2
    cs = 0.5 * math.sinh(2 * u)
    alpha = alpha0 * np.exp(1j * phi_L)
    rot = alpha * np.exp(-1j * phi_S)

    dn_c = kappa * c2 * (ncb - n_c) + gm * s2 * (nmb + n_c + 1)
    dn_m = gm * c2 * (nmb - n_m) + kappa * s2 * (ncb + n_m + 1)
    drag = kappa * (2 * ncb + 1) + gm * (2 * nmb + 1) + (n_m - n_c) * (kappa - gm)
    du = 0.5 * (2 * p.gamma0 * rot.imag - cs * drag / (n_c + n_m + 1))
    in_phase = 2 * p.gamma0 * rot.real
    if in_phase == 0.0:
        dphi = detune
    elif u == 0.0:
        raise SingularityError("squeezing phase rate diverges at u = 0", None, [n_c, n_m, u, phi_S])
    else:
        dphi = -in_phase / math.tanh(2 * u) + detune
    return np.array([dn_c, dn_m, du, dphi])


def tmsts_populations(s: TmstsState) -> tuple[float, float]:
    """Total occupations ``(n_c, n_m)`` of the squeezed modes."""
    c2, s2 = math.cosh(s.u) ** 2, math.sinh(s.u) ** 2
    return c2 * s.n_c_th + s2 * (s.n_m_th + 1), c2 * s.n_m_th + s2 * (s.n_c_th + 1)


def corr_variance(s: TmstsState | Sequence[float]) -> float:
    """Minimum correlation variance ``(n_c_th + n_m_th + 1) exp(-2u)``."""
    n_c, n_m, u = _unpack(s)
    return (n_c + n_m + 1) * math.exp(-2 * u)


def corr_variance_rhs(
    delta12sq: float,
    delta_n_th: float,
    zeta: float,
    g_b: float,
    n_bar_b: float,
    delta_n_b: float,
) -> float:
    """Rate of change of the correlation variance along a TMSTS trajectory."""
    return 2 * n_bar_b + 1 + zeta * (delta_n_th - delta_n_b) - (1 + g_b) * delta12sq


def blue_threshold(zeta: float) -> float:
    """Largest drive ``sqrt(1 - zeta^2)`` that still admits a steady state."""
    if abs(zeta) > 1:
        raise DomainError("zeta must satisfy |zeta| <= 1")
    return math.sqrt(1 - zeta * zeta)


def tmsts_steady_state(
    g_b: float, zeta: float, n_bar_b: float, delta_n_b: float
) -> tuple[float, float, float, float]:
    """Steady ``(u, n_bar_th, delta_n_th, delta12sq)`` below the blue threshold.

    Raises
    ------
    UnstableRegimeError
        If ``g_b**2 >= 1 - zeta**2``: squeezing and populations grow without bound.
    """
    if g_b < 0:
        raise DomainError("g_b must be non-negative")
    den = 1 - g_b * g_b - zeta * zeta
    if den <= 0:
        raise UnstableRegimeError(
            f"g_b={g_b} is at or above the threshold {math.sqrt(max(1 - zeta * zeta, 0.0))} for zeta={zeta}"
        )
    w = 2 * n_bar_b + 1
    u = 0.5 * math.atanh(g_b)
    n_bar = 0.5 * (w * (1 - zeta * zeta) * math.sqrt(1 - g_b * g_b) / den - 1)
    delta_n = delta_n_b + w * g_b * g_b * zeta / den
    d2 = w * (1 - g_b) * (1 - zeta * zeta) / den
    return u, n_bar, delta_n, d2


def tmsts_observables(y: Sequence[float]) -> dict[str, float]:
    n_c_th, n_m_th, u = (float(v) for v in y[:3])
    c2, s2 = math.cosh(u) ** 2, math.sinh(u) ** 2
    return {
        "n_c": c2 * n_c_th + s2 * (n_m_th + 1),
        "n_m": c2 * n_m_th + s2 * (n_c_th + 1),
        "delta12sq": (n_c_th + n_m_th + 1) * math.exp(-2 * u),
        "u": u,
    }


def evolve_tmsts(
    zeta: float,
    n_c_b: float,
    n_m_b: float,
    pump: PumpProfile,
    t_max: float,
    initial: TmstsState | None = None,
    cfg: IntegratorConfig | None = None,
    t_eval: Sequence[float] | None = None,
    events: Sequence[Event] = (),
    u_cap: float | None = None,
    n_cap: float | None = None,
):
    """Integrate the TMSTS parameters under a resonant blue-sideband pump.

    Starts from thermal equilibrium unless ``initial`` is given.  ``u_cap``
    stops the run once the squeeze amplitude exceeds it and ``n_cap`` once the
    summed thermal populations do.  Above threshold either may grow without
    bound (from a hot start the populations run away while ``u`` saturates),
    so the caps keep such integrations finite; ``flags["runaway"]`` records
    that one was hit.

    Returns the trajectory and the list of event crossings.
    """
    if pump.sideband is not Sideband.BLUE:
        raise DomainError("evolve_tmsts needs a blue-sideband pump profile")
    check_dimensionless(zeta, n_c_b, n_m_b)
    cfg = cfg or IntegratorConfig()
    init = initial or TmstsState(n_c_b, n_m_b, 0.0, pump.phi_L - 0.5 * math.pi)
    y = init.as_array()
    all_events = list(events)
    caps = []
    if u_cap is not None:
        caps.append(Event(lambda t, yy: yy[2], threshold=u_cap, terminal=True, name="u_cap"))
    if n_cap is not None:
        caps.append(Event(lambda t, yy: yy[0] + yy[1], threshold=n_cap, terminal=True, name="n_cap"))
    all_events.extend(caps)
    cuts = [0.0, *pump.breakpoints(0.0, t_max), t_max]
    pieces = []
    crossings = []
    runaway = False
    for a, b in zip(cuts, cuts[1:]):
        g = pump.g_at(a)
        sol = integrate(lambda tt, yy: tmsts_rhs(yy, zeta, g, n_c_b, n_m_b), y, (a, b), cfg, all_events)
        pieces.append(sol)
        crossings.extend(c for c in sol.crossings if c.event not in caps)
        y = sol.y_end
        if sol.terminated:
            runaway = any(c.event in caps for c in sol.crossings)
            if runaway or any(c.event.terminal for c in sol.crossings):
                break

    t_lo, t_hi = pieces[0].t[0], pieces[-1].t[-1]

    def dense(tt: float) -> np.ndarray:
        for sol in pieces:
            if sol.t[0] - 1e-12 <= tt <= sol.t[-1] + 1e-12:
                return sol(tt)
        raise ValueError(f"t={tt} outside [{t_lo}, {t_hi}]")

    if t_eval is None:
        times = np.unique(np.concatenate([sol.t for sol in pieces]))
    else:
        times = np.asarray(t_eval, dtype=float)
        times = times[times <= t_hi + 1e-12]
    states = np.array([dense(tt) for tt in times])
    rows = [tmsts_observables(s) for s in states]
    obs = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    traj = Trajectory(
        times=times,
        states=states,
        observables=obs,
        state_names=STATE_NAMES,
        dense=dense,
        observable_fn=lambda tt, yy: tmsts_observables(yy),
        flags={"runaway": runaway, "t_end": float(t_hi), "phi_S": init.phi_S},
    )
    return traj, crossings
