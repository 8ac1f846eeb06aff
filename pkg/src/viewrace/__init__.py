"""Solvers and simulators for providers competing to accelerate content diffusion."""

from .bestresponse import BestResponseResult, best_response, cost_quadrature, verify_best_response
from .dynamics import Trajectory, advance, simulate, time_to_reach
from .equilibrium import (EquilibriumKind, EquilibriumResult, best_response_iteration,
                          epsilon_equilibrium, symmetric_equilibrium, vanishing_threshold)
from .model import (ControlLevel, GameConfig, PlayerParams, Strategy, load_scenario,
                    threshold_profile, validate)

__all__ = [
    "BestResponseResult", "ControlLevel", "EquilibriumKind", "EquilibriumResult", "GameConfig",
    "PlayerParams", "Strategy", "Trajectory", "advance", "best_response",
    "best_response_iteration", "cost_quadrature", "epsilon_equilibrium", "load_scenario",
    "simulate", "symmetric_equilibrium", "threshold_profile", "time_to_reach", "validate",
    "vanishing_threshold", "verify_best_response",
]
__version__ = "0.1.0"
