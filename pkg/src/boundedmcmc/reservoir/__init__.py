"""Single-phase reservoir simulator with adjoint gradients and synthetic model generation."""

from .model import (
    SIGMA_BHP,
    SIGMA_BLOCK,
    Block,
    Connection,
    ObservationPoint,
    ObservationSet,
    Perforation,
    ReservoirModel,
    ScheduleEntry,
    Well,
    format_model,
    parse_model,
    read_model,
    read_observations,
    write_model,
    write_observations,
)
from .simulator import (
    SimulationError,
    SimulationResult,
    Simulator,
    adjoint_gradient,
    extract_data,
    forward_simulate,
    log_likelihood,
    step_residuals,
)
from .synthetic import (
    PRESETS,
    SyntheticSpec,
    build_synthetic_model,
    generate_synthetic_observations,
    observation_layout,
)

__all__ = [
    "SIGMA_BHP",
    "SIGMA_BLOCK",
    "Block",
    "Connection",
    "ObservationPoint",
    "ObservationSet",
    "Perforation",
    "ReservoirModel",
    "ScheduleEntry",
    "Well",
    "format_model",
    "parse_model",
    "read_model",
    "read_observations",
    "write_model",
    "write_observations",
    "SimulationError",
    "SimulationResult",
    "Simulator",
    "adjoint_gradient",
    "extract_data",
    "forward_simulate",
    "log_likelihood",
    "step_residuals",
    "PRESETS",
    "SyntheticSpec",
    "build_synthetic_model",
    "generate_synthetic_observations",
    "observation_layout",
]
