"""Adaptive Dormand-Prince 5(4) driver with dense output and threshold events.

The pair propagates the fifth-order solution and uses the embedded fourth-order
one for error control.  Dense output is the usual quartic continuous extension,
so crossings of an observable can be located between accepted steps by
bisection on the interpolant.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DivergenceError, SingularityError

__all__ = [
    "Crossing",
    "Direction",
    "Event",
    "IntegratorConfig",
    "OdeSolution",
    "integrate",
]

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = tuple(
    np.array(row)
    for row in (
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    )
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth-order minus embedded fourth-order weights, 7th stage is the FSAL one
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic dense output, y(t + s h) = y + h * K^T P [s, s^2, s^3, s^4]
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_EVENT_TOL = 1e-10


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and step bounds, all in dimensionless time."""

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 0.1
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


class Direction(enum.Enum):
    RISING = 1
    FALLING = -1
    BOTH = 0


@dataclass(frozen=True)
class Event:
    """Crossing of ``observable(t, y)`` through ``threshold``.

    A terminal event stops the integration at the crossing time.
    """

    observable: Callable[[float, np.ndarray], float]
    threshold: float = 0.0
    direction: Direction = Direction.BOTH
    terminal: bool = False
    name: str = ""

    def value(self, t: float, y: np.ndarray) -> float:
        return float(self.observable(t, y)) - self.threshold


@dataclass(frozen=True)
class Crossing:
    t: float
    y: np.ndarray
    event: Event
    rising: bool


@dataclass
class _Step:
    t0: float
    h: float
    y0: np.ndarray
    K: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.h
        powers = np.array([s, s * s, s ** 3, s ** 4])
        return self.y0 + self.h * (self.K.T @ (_P @ powers))


@dataclass
class OdeSolution:
    """Accepted steps, the dense interpolant and detected crossings."""

    t: np.ndarray
    y: np.ndarray
    crossings: list[Crossing] = field(default_factory=list)
    steps: list[_Step] = field(default_factory=list, repr=False)
    n_rhs: int = 0
    n_rejected: int = 0
    terminated: bool = False

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def y_end(self) -> np.ndarray:
        return self.y[-1]

    def __call__(self, t: float) -> np.ndarray:
        """Dense output at ``t`` inside the integrated range."""
        t0, t1 = float(self.t[0]), float(self.t[-1])
        if not (t0 - 1e-12 <= t <= t1 + 1e-12):
            raise ValueError(f"t={t} outside integrated range [{t0}, {t1}]")
        if not self.steps:
            return self.y[0].copy()
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        i = min(max(i, 0), len(self.steps) - 1)
        return self.steps[i](t)

    def sample(self, times: Sequence[float]) -> np.ndarray:
        return np.array([self(float(t)) for t in times])


def _error_norm(x: np.ndarray) -> float:
    # max norm: every component is held to its own tolerance
    return float(np.max(x))


def _bisect(event: Event, step: _Step, ta: float, tb: float, ga: float) -> float:
    while tb - ta > _EVENT_TOL:
        tm = 0.5 * (ta + tb)
        gm = event.value(tm, step(tm))
        if gm == 0.0:
            return tm
        if (gm > 0) == (ga > 0):
            ta, ga = tm, gm
        else:
            tb = tm
    return 0.5 * (ta + tb)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: Sequence[float],
    t_span: tuple[float, float],
    cfg: IntegratorConfig | None = None,
    events: Sequence[Event] = (),
    fixed_step: float | None = None,
) -> OdeSolution:
    """Integrate ``dy/dt = rhs(t, y)`` over ``t_span``.

    Parameters
    ----------
    rhs:
        Right-hand side returning an array shaped like ``y``.
    y0:
        Initial state.
    t_span:
        ``(t0, t1)`` with ``t1 > t0``.
    cfg:
        Tolerances and step limits; defaults to :class:`IntegratorConfig`.
    events:
        Observables whose threshold crossings are located on the dense output.
    fixed_step:
        When given, take uniform steps of this size without error control
        (used for order verification).

    Raises
    ------
    SingularityError
        The right-hand side is non-finite at ``y0``, or the step shrinks below
        ``h_min`` (steps whose trial stages are non-finite are rejected first).
    DivergenceError
        ``max_steps`` accepted steps did not reach ``t1``.
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing and non-empty")
    y = np.array(y0, dtype=float if not np.iscomplexobj(y0) else complex)
    n = y.size

    def f(t, yy):
        out = np.asarray(rhs(t, yy))
        if not np.all(np.isfinite(out)):
            raise SingularityError(f"non-finite derivative at t={t}", t, yy)
        return out

    K = np.empty((7, n), dtype=y.dtype)
    try:
        K[0] = f(t0, y)
    except SingularityError as exc:
        raise SingularityError(str(exc), t0, y) from None
    n_rhs = 1
    ts = [t0]
    ys = [y.copy()]
    steps: list[_Step] = []
    crossings: list[Crossing] = []
    event_vals = [ev.value(t0, y) for ev in events]

    t = t0
    h = fixed_step if fixed_step is not None else min(cfg.h_init, t1 - t0)
    n_rejected = 0
    terminated = False
    n_steps = 0

    while t < t1:
        if n_steps >= cfg.max_steps:
            raise DivergenceError(f"max_steps={cfg.max_steps} exceeded at t={t}", t, y)
        h = min(h, t1 - t)
        # snap the last step to avoid a sliver
        if t1 - (t + h) < 1e-14 * max(1.0, abs(t1)):
            h = t1 - t
        try:
            for s in range(1, 6):
                dy = h * (_A[s] @ K[:s])
                K[s] = f(t + _C[s] * h, y + dy)
            y_new = y + h * (_B @ K[:6])
            K[6] = f(t + h, y_new)
        except SingularityError:
            # a trial stage left the domain of the right-hand side: shrink and retry
            if fixed_step is not None:
                raise
            n_rejected += 1
            h *= _MIN_FACTOR
            if h < cfg.h_min:
                raise SingularityError(f"step size underflow at t={t} (h={h:.3e})", t, y) from None
            continue
        n_rhs += 6

        if fixed_step is None:
            err = h * (_E @ K)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = _error_norm(np.abs(err) / scale)
            if err_norm > 1.0:
                n_rejected += 1
                factor = max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
                h *= factor
                if h < cfg.h_min:
                    raise SingularityError(f"step size underflow at t={t} (h={h:.3e})", t, y)
                continue
            factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
        else:
            factor = 1.0

        step = _Step(t, h, y.copy(), K.copy())
        t_new = t + h if t + h < t1 else t1
        stop_at = None
        for i, ev in enumerate(events):
            g_new = ev.value(t_new, y_new)
            g_old = event_vals[i]
            event_vals[i] = g_new
            if g_old != 0.0 and (g_new == 0.0 or (g_new > 0) != (g_old > 0)):
                rising = g_new > g_old
                if ev.direction is Direction.RISING and not rising:
                    continue
                if ev.direction is Direction.FALLING and rising:
                    continue
                tc = t_new if g_new == 0.0 else _bisect(ev, step, t, t_new, g_old)
                crossings.append(Crossing(tc, step(tc), ev, rising))
                if ev.terminal and (stop_at is None or tc < stop_at):
                    stop_at = tc

        steps.append(step)
        n_steps += 1
        if stop_at is not None:
            y = step(stop_at)
            t = stop_at
            crossings = [c for c in crossings if c.t <= stop_at]
            ts.append(t)
            ys.append(y.copy())
            terminated = True
            break

        t, y = t_new, y_new
        K[0] = K[6]
        ts.append(t)
        ys.append(y.copy())
        if fixed_step is None:
            h = min(cfg.h_max, h * factor)
        else:
            h = fixed_step

    crossings.sort(key=lambda c: c.t)
    return OdeSolution(
        t=np.array(ts),
        y=np.array(ys),
        crossings=crossings,
        steps=steps,
        n_rhs=n_rhs,
        n_rejected=n_rejected,
        terminated=terminated,
    )
