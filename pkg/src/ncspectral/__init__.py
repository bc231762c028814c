"""Metropolis Monte Carlo for the truncated spectral-action matrix model on the Moyal plane."""

from .action import ActionTerms, eval_full, propose_delta, scalar_action
from .model import Dim, FieldConfig, ModelParams, ParamError, derive_coeffs, random_config, zero_config
from .sampler import RunPlan, Start, init_chain, run_chain

__version__ = "0.1.0"

__all__ = [
    "ActionTerms", "Dim", "FieldConfig", "ModelParams", "ParamError", "RunPlan", "Start",
    "derive_coeffs", "eval_full", "init_chain", "propose_delta", "random_config", "run_chain",
    "scalar_action", "zero_config",
]
