"""Independent checks of the thermal-state ansatz.

Two references are provided.  The moment oracle integrates the closed linear
equations for the second moments ``N_c = <d^dag d>``, ``N_m = <b^dag b>``,
``C = <d^dag b>`` and ``S = <d b>`` that follow from the master equation.  The
Fock oracle integrates the master equation itself for a density matrix in a
truncated number basis.  Both run in physical time of a :class:`SystemParams`;
with ``Gamma_+ = 1`` this is the dimensionless time of the ansatz modules.

First moments vanish for every state considered here and are not evolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigvalsh, expm, sqrtm

from .core import (
    BtsState,
    DomainError,
    PumpProfile,
    Sideband,
    SystemParams,
    TmstsState,
    Trajectory,
)
from .integrate import IntegratorConfig, integrate

MOMENT_NAMES = ("N_c", "N_m", "re", "im")
TRACE_TOL = 1e-6
HERMITIAN_TOL = 1e-10
TOP_LAYER_TOL = 1e-6


@dataclass(frozen=True)
class MomentSet:
    """Second moments of the two modes; ``C`` and ``S`` default to zero."""

    N_c: float
    N_m: float
    C: complex = 0j
    S: complex = 0j

    def red_vector(self) -> np.ndarray:
        return np.array([self.N_c, self.N_m, self.C.real, self.C.imag])

    def blue_vector(self) -> np.ndarray:
        return np.array([self.N_c, self.N_m, self.S.real, self.S.imag])

    @classmethod
    def from_red_vector(cls, v: Sequence[float]) -> MomentSet:
        return cls(float(v[0]), float(v[1]), complex(v[2], v[3]))

    @classmethod
    def from_blue_vector(cls, v: Sequence[float]) -> MomentSet:
        return cls(float(v[0]), float(v[1]), S=complex(v[2], v[3]))

    def correlation_variance(self, beta_c: float = 0.0, beta_m: float = 0.0) -> float:
        """``(Delta X)^2 + (Delta Y)^2`` for joint quadratures at phases ``beta_c, beta_m``."""
        return self.N_c + self.N_m + 1 + 2 * (self.S * np.exp(1j * (beta_c + beta_m))).real

    def min_correlation_variance(self) -> float:
        """Correlation variance minimised over the quadrature phases."""
        return self.N_c + self.N_m + 1 - 2 * abs(self.S)

    def covariance(self) -> np.ndarray:
        """Symmetrised quadrature covariance of ``(x_c, p_c, x_m, p_m)``.

        Quadratures are ``x = (a + a^dag)/sqrt 2``, so the vacuum is ``I/2``.
        """
        C, S = self.C, self.S
        # symmetrised moments of (d, b, d^dag, b^dag)
        G = np.array(
            [
                [0, S, self.N_c + 0.5, np.conj(C)],
                [S, 0, C, self.N_m + 0.5],
                [self.N_c + 0.5, C, 0, np.conj(S)],
                [np.conj(C), self.N_m + 0.5, np.conj(S), 0],
            ],
            dtype=complex,
        )
        r = 1 / math.sqrt(2)
        T = np.array(
            [
                [r, 0, r, 0],
                [-1j * r, 0, 1j * r, 0],
                [0, r, 0, r],
                [0, -1j * r, 0, 1j * r],
            ]
        )
        return (T @ G @ T.T).real


_OMEGA = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def uncertainty_margin(m: MomentSet) -> float:
    """Smallest eigenvalue of ``sigma + i Omega / 2``; negative means unphysical."""
    return float(eigvalsh(m.covariance() + 0.5j * _OMEGA).min())


def moment_rhs_red(
    m: MomentSet | Sequence[float],
    p: SystemParams,
    G: float,
    delta_plus: float = 0.0,
    phi_L: float = 0.0,
) -> np.ndarray:
    """Moment derivatives under the beam-splitter coupling ``G = gamma0 alpha0``.

    Accepts a :class:`MomentSet` or a vector ``(N_c, N_m, Re C, Im C)`` and
    returns the derivative in the vector layout.
    """
    v = m.red_vector() if isinstance(m, MomentSet) else m
    N_c, N_m = v[0], v[1]
    C = complex(v[2], v[3])
    alpha = G * np.exp(1j * phi_L)
    flow = -2 * (alpha * C).imag
    dN_c = flow - p.kappa * (N_c - p.n_c_bath)
    dN_m = -flow - p.gamma_m * (N_m - p.n_m_bath)
    dC = 1j * np.conj(alpha) * (N_c - N_m) - (1j * delta_plus + p.gamma_plus) * C
    return np.array([dN_c, dN_m, dC.real, dC.imag])


def moment_rhs_blue(
    m: MomentSet | Sequence[float],
    p: SystemParams,
    G: float,
    phi_L: float = 0.0,
) -> np.ndarray:
    """Moment derivatives under the pair-creation coupling, vector ``(N_c, N_m, Re S, Im S)``."""
    v = m.blue_vector() if isinstance(m, MomentSet) else m
    N_c, N_m = v[0], v[1]
    S = complex(v[2], v[3])
    alpha = G * np.exp(1j * phi_L)
    gain = -2 * (alpha * np.conj(S)).imag
    dN_c = gain - p.kappa * (N_c - p.n_c_bath)
    dN_m = gain - p.gamma_m * (N_m - p.n_m_bath)
    dS = 1j * alpha * (N_c + N_m + 1) - p.gamma_plus * S
    return np.array([dN_c, dN_m, dS.real, dS.imag])


def moment_rhs_red_dimensionless(v, zeta, g_r, detuning_ratio, n_c_b, n_m_b) -> np.ndarray:
    p = SystemParams.from_dimensionless(zeta, n_c_b, n_m_b)
    return moment_rhs_red(v, p, 0.5 * g_r, detuning_ratio)


def bts_to_moments(s: BtsState) -> np.ndarray:
    """Moment vector ``(N_c, N_m, Re C, Im C)`` of a beam-split thermal state."""
    c2, s2 = math.cos(s.theta) ** 2, math.sin(s.theta) ** 2
    C = 0.5j * np.exp(-1j * s.phi_B) * (s.n_c_th - s.n_m_th) * math.sin(2 * s.theta)
    return np.array([s.n_c_th * c2 + s.n_m_th * s2, s.n_m_th * c2 + s.n_c_th * s2, C.real, C.imag])


def _closest(angle: float, ref: float, period: float) -> float:
    return angle + period * round((ref - angle) / period)


def moments_to_bts(v: Sequence[float], previous: BtsState | None = None) -> BtsState:
    """Recover the BTS parameters from a moment vector.

    The map is many-to-one: ``(theta, phi_B)``, ``(theta, phi_B + pi)`` with
    the opposite sign of ``sin 2 theta``, and a swap of the thermal labels with
    ``theta -> theta + pi/2`` give the same state.  The branch closest to
    ``previous`` is returned, which keeps recovered trajectories continuous.
    """
    prev = previous or BtsState(v[0], v[1], 0.0, 0.0)
    N_c, N_m = float(v[0]), float(v[1])
    C = complex(v[2], v[3])
    total = N_c + N_m
    D = N_c - N_m
    # X e^{-i phi} = -2 i C with X = (n_c - n_m) sin 2 theta real
    w = -2j * C
    if abs(w) == 0.0:
        phi, X = prev.phi_B, 0.0
    else:
        phi0 = -math.atan2(w.imag, w.real)
        phi = _closest(phi0, prev.phi_B, 2 * math.pi)
        alt = _closest(phi0 + math.pi, prev.phi_B, 2 * math.pi)
        if abs(alt - prev.phi_B) < abs(phi - prev.phi_B):
            phi, X = alt, -abs(w)
        else:
            X = abs(w)
    mag = math.hypot(D, X)
    best = None
    for sign in (1.0, -1.0):
        delta = sign * mag
        if delta == 0.0:
            theta = prev.theta
        else:
            theta = _closest(0.5 * math.atan2(X / delta, D / delta), prev.theta, math.pi)
        n_c = 0.5 * (total + delta)
        n_m = 0.5 * (total - delta)
        cand = BtsState(n_c, n_m, theta, phi)
        score = abs(theta - prev.theta) + 1e-12 * abs(delta - (prev.n_c_th - prev.n_m_th))
        if best is None or score < best[0]:
            best = (score, cand)
    return best[1]


def _phasor(phi: float) -> complex:
    """``exp(i phi)`` with exact zeros at quarter turns.

    ``cos(pi/2)`` evaluates to 6e-17, which a large squeezing amplitude would
    otherwise promote to a visible spurious component.
    """
    c, s = math.cos(phi), math.sin(phi)
    return complex(0.0 if abs(c) < 1e-15 else c, 0.0 if abs(s) < 1e-15 else s)


def tmsts_to_moments(s: TmstsState) -> np.ndarray:
    """Moment vector ``(N_c, N_m, Re S, Im S)`` of a two-mode squeezed thermal state."""
    c2, s2 = math.cosh(s.u) ** 2, math.sinh(s.u) ** 2
    S = -0.5 * _phasor(s.phi_S) * math.sinh(2 * s.u) * (s.n_c_th + s.n_m_th + 1)
    return np.array([c2 * s.n_c_th + s2 * (s.n_m_th + 1), c2 * s.n_m_th + s2 * (s.n_c_th + 1), S.real, S.imag])


def moments_to_tmsts(v: Sequence[float]) -> TmstsState:
    N_c, N_m = float(v[0]), float(v[1])
    S = complex(v[2], v[3])
    T = N_c + N_m + 1
    n1 = math.sqrt(max(T * T - 4 * abs(S) ** 2, 0.0))
    u = 0.5 * math.atanh(min(2 * abs(S) / T, 1.0))
    phi = math.atan2(-S.imag, -S.real) if S != 0 else -0.5 * math.pi
    diff = N_c - N_m
    return TmstsState(0.5 * (n1 - 1 + diff), 0.5 * (n1 - 1 - diff), u, phi)


def evolve_moments(
    p: SystemParams,
    pump: PumpProfile,
    m0: MomentSet,
    t_max: float,
    t_eval: Sequence[float] | None = None,
    cfg: IntegratorConfig | None = None,
) -> Trajectory:
    """Integrate the moment equations in units where ``Gamma_+`` sets the time scale.

    Pump strengths in ``pump`` are dimensionless; the coupling used is
    ``G = g Gamma_+ / 2`` and the red detuning ``Delta_+ = detuning Gamma_+``.
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
    gp = p.gamma_plus
    red = pump.sideband is Sideband.RED
    y = m0.red_vector() if red else m0.blue_vector()
    cuts = [0.0, *pump.breakpoints(0.0, t_max), t_max]
    pieces = []
    for a, b in zip(cuts, cuts[1:]):
        G = 0.5 * pump.g_at(a) * gp
        if red:
            f = lambda t, v, G=G: moment_rhs_red(v, p, G, pump.detuning * gp, pump.phi_L)
        else:
            f = lambda t, v, G=G: moment_rhs_blue(v, p, G, pump.phi_L)
        sol = integrate(lambda t, v: f(t, v) / gp, y, (a, b), cfg)
        pieces.append(sol)
        y = sol.y_end

    def dense(t):
        for sol in pieces:
            if sol.t[0] - 1e-12 <= t <= sol.t[-1] + 1e-12:
                return sol(t)
        raise ValueError(f"t={t} outside integrated range")

    times = np.unique(np.concatenate([s.t for s in pieces])) if t_eval is None else np.asarray(t_eval, float)
    states = np.array([dense(t) for t in times])
    obs_fn = _red_moment_observables if red else _blue_moment_observables
    rows = [obs_fn(v) for v in states]
    return Trajectory(
        times=times,
        states=states,
        observables={k: np.array([r[k] for r in rows]) for k in rows[0]},
        state_names=MOMENT_NAMES,
        dense=dense,
        observable_fn=lambda t, v: obs_fn(v),
    )


def _red_moment_observables(v) -> dict[str, float]:
    return {"N_c": v[0], "N_m": v[1], "C_re": v[2], "C_im": v[3], "delta12sq": v[0] + v[1] + 1}


def _blue_moment_observables(v) -> dict[str, float]:
    m = MomentSet.from_blue_vector(v)
    return {
        "N_c": v[0],
        "N_m": v[1],
        "S_re": v[2],
        "S_im": v[3],
        "S_abs": abs(m.S),
        "delta12sq": m.min_correlation_variance(),
    }


def bts_moment_trajectory(traj: Trajectory) -> Trajectory:
    """Map an ansatz trajectory of BTS parameters onto moment observables."""
    rows = [_red_moment_observables(bts_to_moments(BtsState.from_array(y))) for y in traj.states]
    return Trajectory(traj.times, traj.states, {k: np.array([r[k] for r in rows]) for k in rows[0]})


def tmsts_moment_trajectory(traj: Trajectory, phi_S: float) -> Trajectory:
    rows = [
        _blue_moment_observables(tmsts_to_moments(TmstsState.from_array(y, phi_S))) for y in traj.states
    ]
    return Trajectory(traj.times, traj.states, {k: np.array([r[k] for r in rows]) for k in rows[0]})


# ---------------------------------------------------------------------------
# truncated Fock space


def _destroy(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)


def _thermal_diag(n_th: float, dim: int) -> np.ndarray:
    if n_th == 0:
        w = np.zeros(dim)
        w[0] = 1.0
        return w
    q = n_th / (1 + n_th)
    return q ** np.arange(dim) / (1 + n_th)


@dataclass
class FockDensity:
    """Density matrix over the product basis ``|n_c> (x) |n_m>`` (microwave index slowest)."""

    dims: tuple[int, int]
    rho: np.ndarray

    def __post_init__(self):
        n = self.dims[0] * self.dims[1]
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (n, n):
            raise DomainError(f"rho must be {n}x{n} for dims {self.dims}")

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def hermiticity_error(self) -> float:
        return float(np.abs(self.rho - self.rho.conj().T).max())

    def top_layer_occupancy(self) -> float:
        """Largest probability in the highest Fock layer of either mode."""
        nc, nm = self.dims
        p = np.real(np.diag(self.rho)).reshape(nc, nm)
        return float(max(p[-1, :].sum(), p[:, -1].sum()))

    def min_eigenvalue(self) -> float:
        return float(eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min())

    @classmethod
    def thermal(cls, n_c: float, n_m: float, dims: tuple[int, int]) -> FockDensity:
        """Product thermal state, renormalised to unit trace after truncation."""
        w = np.kron(_thermal_diag(n_c, dims[0]), _thermal_diag(n_m, dims[1]))
        return cls(dims, np.diag(w / w.sum()).astype(complex))


def thermal_dim(n_th: float, tail: float = 1e-8) -> int:
    """Smallest truncation whose thermal tail beyond it is below ``tail``."""
    if n_th <= 0:
        return 2
    q = n_th / (1 + n_th)
    # probability of occupying level >= N is q**N
    return max(2, int(math.ceil(math.log(tail) / math.log(q))))


class FockOperators:
    """Ladder operators of the truncated product space."""

    def __init__(self, dims: tuple[int, int]):
        nc, nm = dims
        self.dims = dims
        self.d = np.kron(_destroy(nc), np.eye(nm))
        self.b = np.kron(np.eye(nc), _destroy(nm))
        self.n_c = self.d.T @ self.d
        self.n_m = self.b.T @ self.b


def bts_density(s: BtsState, dims: tuple[int, int]) -> FockDensity:
    """Beam-split thermal state ``B rho_T B^dag`` with
    ``B = exp[i theta (d^dag b e^{i phi_B} + d b^dag e^{-i phi_B})]``."""
    ops = FockOperators(dims)
    gen = s.theta * (ops.d.T @ ops.b * np.exp(1j * s.phi_B) + ops.d @ ops.b.T * np.exp(-1j * s.phi_B))
    U = expm(1j * gen)
    rho_T = FockDensity.thermal(s.n_c_th, s.n_m_th, dims).rho
    return FockDensity(dims, U @ rho_T @ U.conj().T)


def tmsts_density(s: TmstsState, dims: tuple[int, int]) -> FockDensity:
    """Two-mode squeezed thermal state with ``S = exp(xi^* d b - xi d^dag b^dag)``,
    ``xi = u e^{i phi_S}``; the result is renormalised after truncation."""
    ops = FockOperators(dims)
    xi = s.u * np.exp(1j * s.phi_S)
    U = expm(np.conj(xi) * ops.d @ ops.b - xi * ops.d.T @ ops.b.T)
    rho = U @ FockDensity.thermal(s.n_c_th, s.n_m_th, dims).rho @ U.conj().T
    return FockDensity(dims, rho / np.trace(rho).real)


def fidelity(a: FockDensity, b: FockDensity) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))^2``."""
    ra = sqrtm(a.rho)
    return float(np.real(np.trace(sqrtm(ra @ b.rho @ ra))) ** 2)


class FockModel:
    """Master-equation generator for one sideband in the pump rotating frame.

    The Hamiltonian is ``-delta d^dag d - (alpha d^dag b + h.c.)`` on the red
    sideband and ``-(alpha d^dag b^dag + h.c.)`` on the blue one, with
    ``alpha = G e^{i phi_L}``.  Each mode couples to its thermal bath through
    the usual emission and absorption dissipators.
    """

    def __init__(self, p: SystemParams, dims: tuple[int, int], sideband: Sideband, phi_L: float = 0.0, delta: float = 0.0):
        self.p = p
        self.dims = dims
        self.sideband = sideband
        ops = FockOperators(dims)
        self.ops = ops
        d, b = ops.d, ops.b
        self.jumps = []
        for rate, A in (
            (p.kappa * (p.n_c_bath + 1), d),
            (p.kappa * p.n_c_bath, d.T),
            (p.gamma_m * (p.n_m_bath + 1), b),
            (p.gamma_m * p.n_m_bath, b.T),
        ):
            if rate > 0:
                self.jumps.append((rate, A))
        self.damping = sum(0.5 * rate * A.T @ A for rate, A in self.jumps)
        phase = np.exp(1j * phi_L)
        if sideband is Sideband.RED:
            self.coupling = -(phase * d.T @ b + np.conj(phase) * b.T @ d)
        else:
            self.coupling = -(phase * d.T @ b.T + np.conj(phase) * d @ b)
        self.detuning_term = -delta * ops.n_c

    def hamiltonian(self, G: float) -> np.ndarray:
        return G * self.coupling + self.detuning_term

    def rhs(self, rho: np.ndarray, G: float) -> np.ndarray:
        H_eff = self.hamiltonian(G) - 1j * self.damping
        A = H_eff @ rho
        out = -1j * (A - A.conj().T)
        for rate, J in self.jumps:
            out += rate * (J @ rho @ J.T)
        return out


def fock_lindblad_rhs(rho: FockDensity, p: SystemParams, pump: PumpProfile, t: float = 0.0) -> np.ndarray:
    """``d rho / dt`` at time ``t`` for the pump profile (pump strengths dimensionless)."""
    delta = pump.detuning * p.gamma_plus if pump.sideband is Sideband.RED else 0.0
    model = FockModel(p, rho.dims, pump.sideband, pump.phi_L, delta)
    return model.rhs(rho.rho, 0.5 * pump.g_at(t) * p.gamma_plus)


def moments_from_fock(rho: FockDensity, beta_c: float = 0.0, beta_m: float = 0.0) -> tuple[MomentSet, float]:
    """Second moments and the joint-quadrature correlation variance of ``rho``.

    The variance uses ``X = x_m(beta_m) + x_c(beta_c)`` and
    ``Y = x_m(beta_m + pi/2) - x_c(beta_c + pi/2)`` with
    ``x(beta) = (a e^{i beta} + a^dag e^{-i beta})/2``, evaluated directly as
    operator expectations.
    """
    ops = FockOperators(rho.dims)
    return _moments(ops, rho.rho, beta_c, beta_m)


def _moments(ops: FockOperators, r: np.ndarray, beta_c: float, beta_m: float) -> tuple[MomentSet, float]:
    d, b = ops.d, ops.b

    def ev(A):
        return np.sum(A.T * r)  # Tr(A r)

    def quad(a, beta):
        return 0.5 * (a * np.exp(1j * beta) + a.T * np.exp(-1j * beta))

    X = quad(b, beta_m) + quad(d, beta_c)
    Y = quad(b, beta_m + 0.5 * math.pi) - quad(d, beta_c + 0.5 * math.pi)
    var = 0.0
    for Q in (X, Y):
        mean = ev(Q).real
        var += ev(Q @ Q).real - mean * mean
    m = MomentSet(ev(ops.n_c).real, ev(ops.n_m).real, complex(ev(d.T @ b)), complex(ev(d @ b)))
    return m, float(var)


@dataclass
class FockRun:
    """Fock-oracle trajectory plus its truncation diagnostics."""

    trajectory: Trajectory
    final: FockDensity
    trace_drift: float
    max_top_layer: float
    max_hermiticity_error: float
    trusted: bool
    notes: list[str] = field(default_factory=list)


def evolve_fock(
    p: SystemParams,
    pump: PumpProfile,
    rho0: FockDensity,
    t_max: float,
    t_eval: Sequence[float],
    beta_c: float = 0.0,
    beta_m: float = 0.0,
    cfg: IntegratorConfig | None = None,
) -> FockRun:
    """Integrate the truncated master equation and record moments at ``t_eval``.

    Time is measured in units of ``1/Gamma_+``.  A run is trusted only while the
    highest Fock layer of each mode holds less than ``1e-6`` probability.
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
    gp = p.gamma_plus
    delta = pump.detuning * gp if pump.sideband is Sideband.RED else 0.0
    model = FockModel(p, rho0.dims, pump.sideband, pump.phi_L, delta)
    n = rho0.rho.shape[0]
    t_eval = np.asarray(t_eval, dtype=float)
    cuts = [0.0, *pump.breakpoints(0.0, t_max), t_max]
    y = rho0.rho.ravel().copy()
    pieces = []
    for a, b in zip(cuts, cuts[1:]):
        G = 0.5 * pump.g_at(a) * gp
        sol = integrate(lambda t, v, G=G: model.rhs(v.reshape(n, n), G).ravel() / gp, y, (a, b), cfg)
        pieces.append(sol)
        y = sol.y_end

    def dense(t):
        for sol in pieces:
            if sol.t[0] - 1e-12 <= t <= sol.t[-1] + 1e-12:
                return sol(t)
        raise ValueError(f"t={t} outside integrated range")

    rows = []
    traces, tops, herm = [], [], []
    for t in t_eval:
        r = dense(t).reshape(n, n)
        fd = FockDensity(rho0.dims, r)
        m, var = _moments(model.ops, r, beta_c, beta_m)
        rows.append(
            {
                "N_c": m.N_c,
                "N_m": m.N_m,
                "delta12sq": var,
                "C_re": m.C.real,
                "C_im": m.C.imag,
                "S_abs": abs(m.S),
            }
        )
        traces.append(fd.trace)
        tops.append(fd.top_layer_occupancy())
        herm.append(fd.hermiticity_error())
    final = FockDensity(rho0.dims, y.reshape(n, n))
    trace_drift = float(np.max(np.abs(np.array(traces) - rho0.trace)))
    max_top = float(max(tops))
    notes = []
    if max_top >= TOP_LAYER_TOL:
        notes.append(f"top Fock layer holds {max_top:.3g} probability (limit {TOP_LAYER_TOL:g})")
    if trace_drift > TRACE_TOL:
        notes.append(f"trace drifted by {trace_drift:.3g}")
    traj = Trajectory(
        times=t_eval,
        states=np.zeros((t_eval.size, 0)),
        observables={k: np.array([r[k] for r in rows]) for k in rows[0]},
        flags={"trace": np.array(traces), "top_layer": np.array(tops)},
    )
    return FockRun(traj, final, trace_drift, max_top, float(max(herm)), not notes, notes)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonReport:
    deviations: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.deviations.values())

    @property
    def worst(self) -> float:
        return max(self.deviations.values(), default=0.0)


def compare_trajectories(
    semi: Trajectory,
    oracle: Trajectory,
    tol: float,
    names: Sequence[str] | None = None,
    times: Sequence[float] | None = None,
) -> ComparisonReport:
    """Per-observable deviation ``max|semi - oracle| / max(max|oracle|, 1)``.

    Both trajectories are evaluated on ``times`` (default: the oracle's grid);
    a trajectory without dense output must already be sampled there.
    """
    grid = np.asarray(oracle.times if times is None else times, dtype=float)
    names = list(names) if names is not None else [k for k in oracle.observables if k in semi.observables]
    if not names:
        raise ValueError("no common observables to compare")

    def sample(traj: Trajectory, name: str) -> np.ndarray:
        if traj.dense is not None and traj.observable_fn is not None:
            return np.array([traj.observable_at(name, t) for t in grid])
        if traj.times.shape != grid.shape or np.max(np.abs(traj.times - grid)) > 1e-12:
            raise ValueError("trajectory grids differ and no dense output is available")
        return np.asarray(traj.observables[name], dtype=float)

    dev = {}
    for name in names:
        a, b = sample(semi, name), sample(oracle, name)
        dev[name] = float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1.0))
    return ComparisonReport(dev, tol)
