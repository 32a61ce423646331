"""Information capacity of continuous-time linear Gaussian control channels."""

from .asymptotics import AsymptoteReport, capacity_at_infinity, small_T_slope, tau_sweep
from .errors import (
    CapacityError,
    ConditioningError,
    ContractError,
    DegenerateNoiseError,
    MagnitudeError,
    NegligibleModeError,
    StabilityClassError,
)
from .gramians import (
    GramianBundle,
    ModeSet,
    RidgeWarning,
    extract_modes,
    gramians_at,
    gramians_at_infinity,
    tilde_gramians_at,
)
from .linalg import finite_gramian, lyapunov_solve, mat_exp, sym_eig
from .oracle import DiscreteChannel, discretize, oracle_capacity
from .solver import (
    NO_HALF_FACTOR,
    Allocation,
    CapacityResult,
    SolverOptions,
    capacity,
    capacity_from_bundle,
    iterative_water_filling,
    mutual_information,
    synthesize_controls,
)
from .system import (
    LtiSystem,
    PoleZeroSpec,
    from_pole_zero,
    scale_damping,
    system_from_dict,
    time_constant,
    validate,
)

__all__ = [
    "AsymptoteReport",
    "Allocation",
    "CapacityError",
    "CapacityResult",
    "ConditioningError",
    "ContractError",
    "DegenerateNoiseError",
    "DiscreteChannel",
    "GramianBundle",
    "LtiSystem",
    "MagnitudeError",
    "ModeSet",
    "NegligibleModeError",
    "NO_HALF_FACTOR",
    "PoleZeroSpec",
    "RidgeWarning",
    "SolverOptions",
    "StabilityClassError",
    "capacity",
    "capacity_at_infinity",
    "capacity_from_bundle",
    "discretize",
    "extract_modes",
    "finite_gramian",
    "from_pole_zero",
    "gramians_at",
    "gramians_at_infinity",
    "iterative_water_filling",
    "lyapunov_solve",
    "mat_exp",
    "mutual_information",
    "oracle_capacity",
    "scale_damping",
    "small_T_slope",
    "sym_eig",
    "synthesize_controls",
    "system_from_dict",
    "tau_sweep",
    "tilde_gramians_at",
    "time_constant",
    "validate",
]
