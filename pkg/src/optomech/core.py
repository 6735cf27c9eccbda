"""Parameter types, unit conversions and shared state containers.

All dynamics in this package run in the dimensionless time ``t~ = t * Gamma_+``
where ``Gamma_+ = (kappa + Gamma_m) / 2``.  Dimensional inputs are converted
once, at the boundary, by :func:`dimensionless_params`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.constants import hbar, k as k_B


class OptomechError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(OptomechError, ValueError):
    """An argument lies outside the domain of a closed-form expression."""


class DegenerateSteadyStateError(DomainError):
    """The steady-state expressions divide by zero for these parameters."""


class UnstableRegimeError(DomainError):
    """Blue-sideband drive at or above the stability threshold has no steady state."""


class SingularityError(OptomechError, ArithmeticError):
    """An ODE right-hand side became non-finite, or the step size underflowed."""

    def __init__(self, message: str, t: float | None = None, y=None):
        super().__init__(message)
        self.t = t
        self.y = None if y is None else np.array(y, copy=True)


class DivergenceError(OptomechError, ArithmeticError):
    """Integration exceeded its step budget or the state ran away."""

    def __init__(self, message: str, t: float | None = None, y=None):
        super().__init__(message)
        self.t = t
        self.y = None if y is None else np.array(y, copy=True)


class HorizonError(OptomechError):
    """A threshold window is still open when the trajectory ends."""


class InfeasibleError(OptomechError):
    """An optimisation target cannot be reached inside the search range."""


def occupation_from_temperature(omega: float, T: float) -> float:
    """Bose-Einstein occupation ``1 / (exp(hbar*omega / k T) - 1)``.

    ``omega`` is an angular frequency in s^-1 and ``T`` a temperature in kelvin.
    """
    if not (omega > 0):
        raise DomainError(f"omega must be positive, got {omega!r}")
    if not (T > 0):
        raise DomainError(f"temperature must be positive, got {T!r}")
    x = hbar * omega / (k_B * T)
    if x > 700.0:
        return 0.0
    return 1.0 / math.expm1(x)


def temperature_from_occupation(n: float, omega: float) -> float:
    """Inverse of :func:`occupation_from_temperature`; ``n = 0`` maps to 0 K."""
    if not (omega > 0):
        raise DomainError(f"omega must be positive, got {omega!r}")
    if n < 0:
        raise DomainError(f"occupation must be non-negative, got {n!r}")
    if n == 0:
        return 0.0
    return hbar * omega / (k_B * math.log1p(1.0 / n))


@dataclass(frozen=True)
class SystemParams:
    """Loss rates, coupling, frequencies and bath occupations of the two modes.

    Rates and frequencies are angular, in s^-1.  ``n_c_bath`` and ``n_m_bath``
    are the mean thermal occupations of the microwave and mechanical baths.
    """

    kappa: float
    gamma_m: float
    n_c_bath: float = 0.0
    n_m_bath: float = 0.0
    gamma0: float = 0.0
    omega_m: float | None = None
    omega_c: float | None = None

    def __post_init__(self):
        if not (self.kappa > 0):
            raise DomainError("kappa must be positive")
        if self.gamma_m < 0:
            raise DomainError("gamma_m must be non-negative")
        if self.n_c_bath < 0 or self.n_m_bath < 0:
            raise DomainError("bath occupations must be non-negative")

    @classmethod
    def from_dimensionless(
        cls,
        zeta: float,
        n_c_bath: float = 0.0,
        n_m_bath: float = 0.0,
        gamma_plus: float = 1.0,
        **kwargs,
    ) -> SystemParams:
        """Build parameters with ``Gamma_+ = gamma_plus`` and relative loss ``zeta``.

        With the default ``gamma_plus=1`` physical time equals dimensionless time.
        """
        check_dimensionless(zeta, n_c_bath, n_m_bath)
        return cls(
            kappa=gamma_plus * (1.0 + zeta),
            gamma_m=gamma_plus * (1.0 - zeta),
            n_c_bath=n_c_bath,
            n_m_bath=n_m_bath,
            **kwargs,
        )

    @classmethod
    def from_temperature(
        cls,
        kappa: float,
        gamma_m: float,
        omega_c: float,
        omega_m: float,
        T: float,
        *,
        n_c_bath: float | None = None,
        n_m_bath: float | None = None,
        gamma0: float = 0.0,
    ) -> SystemParams:
        """Derive bath occupations from a common bath temperature.

        Occupations passed explicitly take precedence over the derived ones.
        """
        if n_c_bath is None:
            n_c_bath = occupation_from_temperature(omega_c, T)
        if n_m_bath is None:
            n_m_bath = occupation_from_temperature(omega_m, T)
        return cls(
            kappa=kappa,
            gamma_m=gamma_m,
            n_c_bath=n_c_bath,
            n_m_bath=n_m_bath,
            gamma0=gamma0,
            omega_m=omega_m,
            omega_c=omega_c,
        )

    @property
    def gamma_plus(self) -> float:
        return 0.5 * (self.kappa + self.gamma_m)

    @property
    def gamma_minus(self) -> float:
        return 0.5 * (self.kappa - self.gamma_m)

    @property
    def zeta(self) -> float:
        return (self.kappa - self.gamma_m) / (self.kappa + self.gamma_m)


def check_dimensionless(zeta: float, n_c_b: float, n_m_b: float) -> None:
    """Reject a relative loss outside ``(-1, 1]`` or a negative bath occupation."""
    if not (-1.0 < zeta <= 1.0):
        raise DomainError(f"zeta must lie in (-1, 1], got {zeta!r}")
    if n_c_b < 0 or n_m_b < 0:
        raise DomainError("bath occupations must be non-negative")


@dataclass(frozen=True)
class DimensionlessParams:
    gamma_plus: float
    zeta: float
    n_bar_b: float
    delta_n_b: float


def dimensionless_params(p: SystemParams) -> DimensionlessParams:
    """Return ``Gamma_+``, ``zeta`` and the average/difference bath occupations.

    ``n_bar_b = (n_m_b + n_c_b) / 2`` and ``delta_n_b = n_m_b - n_c_b``.
    """
    return DimensionlessParams(
        gamma_plus=p.gamma_plus,
        zeta=p.zeta,
        n_bar_b=0.5 * (p.n_m_bath + p.n_c_bath),
        delta_n_b=p.n_m_bath - p.n_c_bath,
    )


class Sideband(enum.Enum):
    RED = "red"
    BLUE = "blue"


@dataclass(frozen=True)
class PumpProfile:
    """Piecewise-constant dimensionless pump strength.

    ``segments`` holds ``(t_start, g)`` pairs sorted by start time; segment ``i``
    is active on ``[t_start_i, t_start_{i+1})``.  Before the first segment the
    pump is off.  ``detuning`` is ``Delta_+ / Gamma_+`` on the red sideband;
    the blue sideband is resonant only.
    """

    sideband: Sideband
    segments: tuple[tuple[float, float], ...]
    detuning: float = 0.0
    phi_L: float = 0.0

    def __post_init__(self):
        segs = tuple((float(t), float(g)) for t, g in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise DomainError("a pump profile needs at least one segment")
        starts = [t for t, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise DomainError("segment start times must be strictly increasing")
        if any(g < 0 for _, g in segs):
            raise DomainError("pump strengths must be non-negative")
        if self.sideband is Sideband.BLUE and self.detuning != 0.0:
            raise DomainError("detuned blue-sideband pumping is not supported")

    @classmethod
    def constant(cls, sideband: Sideband, g: float, **kwargs) -> PumpProfile:
        return cls(sideband, ((0.0, g),), **kwargs)

    def g_at(self, t: float) -> float:
        g = 0.0
        for start, value in self.segments:
            if t >= start:
                g = value
            else:
                break
        return g

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Segment boundaries strictly inside ``(t0, t1)``."""
        return [t for t, _ in self.segments if t0 < t < t1]


@dataclass(frozen=True)
class BtsState:
    """Beam-split thermal state parameters (red sideband)."""

    n_c_th: float
    n_m_th: float
    theta: float = 0.0
    phi_B: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.n_c_th, self.n_m_th, self.theta, self.phi_B])

    @classmethod
    def from_array(cls, y: Sequence[float]) -> BtsState:
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]))

    @classmethod
    def equilibrium(cls, n_c_b: float, n_m_b: float) -> BtsState:
        return cls(n_c_b, n_m_b, 0.0, 0.0)


@dataclass(frozen=True)
class TmstsState:
    """Two-mode squeezed thermal state parameters (blue sideband)."""

    n_c_th: float
    n_m_th: float
    u: float = 0.0
    phi_S: float = -0.5 * math.pi

    def __post_init__(self):
        if self.u < 0:
            raise DomainError("squeeze amplitude u must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.n_c_th, self.n_m_th, self.u])

    @classmethod
    def from_array(cls, y: Sequence[float], phi_S: float = -0.5 * math.pi) -> TmstsState:
        return cls(float(y[0]), float(y[1]), max(float(y[2]), 0.0), phi_S)


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution: times, raw state vectors and named observables.

    ``dense`` optionally holds a callable ``t -> state vector`` valid on the
    sampled range, used for precise threshold crossings.
    """

    times: np.ndarray
    states: np.ndarray
    observables: Mapping[str, np.ndarray]
    state_names: tuple[str, ...] = ()
    dense: Callable[[float], np.ndarray] | None = field(default=None, compare=False, repr=False)
    observable_fn: Callable[[float, np.ndarray], Mapping[str, float]] | None = field(
        default=None, compare=False, repr=False
    )
    flags: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a non-empty 1-D array")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        for name, values in self.observables.items():
            if len(values) != t.size:
                raise ValueError(f"observable {name!r} has {len(values)} samples, expected {t.size}")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size

    def observable_at(self, name: str, t: float) -> float:
        """Evaluate an observable between samples, via dense output when present."""
        if self.dense is not None and self.observable_fn is not None:
            return float(self.observable_fn(t, self.dense(t))[name])
        return float(np.interp(t, self.times, self.observables[name]))
