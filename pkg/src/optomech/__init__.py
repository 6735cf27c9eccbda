"""Semi-analytic dynamics of a pumped, lossy optomechanical system.

Red-sideband pumping keeps a thermal state beam-split, blue-sideband pumping
keeps it two-mode squeezed; both are tracked through a handful of ODEs for the
state parameters.  Moment and truncated-Fock oracles check the ansatz.
"""

from .core import (
    BtsState,
    DegenerateSteadyStateError,
    DivergenceError,
    DomainError,
    HorizonError,
    InfeasibleError,
    OptomechError,
    PumpProfile,
    Sideband,
    SingularityError,
    SystemParams,
    TmstsState,
    Trajectory,
    UnstableRegimeError,
    dimensionless_params,
    occupation_from_temperature,
    temperature_from_occupation,
)
from .integrate import Direction, Event, IntegratorConfig

__all__ = [
    "BtsState",
    "DegenerateSteadyStateError",
    "Direction",
    "DivergenceError",
    "DomainError",
    "Event",
    "HorizonError",
    "InfeasibleError",
    "IntegratorConfig",
    "OptomechError",
    "PumpProfile",
    "Sideband",
    "SingularityError",
    "SystemParams",
    "TmstsState",
    "Trajectory",
    "UnstableRegimeError",
    "dimensionless_params",
    "occupation_from_temperature",
    "temperature_from_occupation",
]
