"""Reversible and non-reversible HMC-type samplers on box-constrained domains."""

from .core import BoxDomain, ChainOutput, EvaluationError, PhaseState, TargetModel, hamiltonian, log_target_density
from .samplers import SamplerConfig, run_chain

__version__ = "0.1.0"

__all__ = [
    "BoxDomain",
    "ChainOutput",
    "EvaluationError",
    "PhaseState",
    "SamplerConfig",
    "TargetModel",
    "hamiltonian",
    "log_target_density",
    "run_chain",
]
