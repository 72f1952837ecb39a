"""Core modules: downlink simulator, approximators, CSSCA optimizer and harness."""

from .agent import CACRLAgent, Variant, variant_dispatch
from .environment import Action, CostSignal, EnvConfig, XRDownlinkEnv
from .experiment import run_experiment, run_sweep
from .policy import GaussianPolicy
from .surrogate import solve_feasible_update, solve_objective_update

__all__ = [
    "CACRLAgent",
    "Variant",
    "variant_dispatch",
    "Action",
    "CostSignal",
    "EnvConfig",
    "XRDownlinkEnv",
    "run_experiment",
    "run_sweep",
    "GaussianPolicy",
    "solve_feasible_update",
    "solve_objective_update",
]
