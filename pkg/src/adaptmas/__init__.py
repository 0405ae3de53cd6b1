"""Agent-based co-adaptation of policy and learning agents, with information-theoretic diagnostics."""

from .control import PolicyVector, Regime
from .engine import RunRecord, evaluate_J, phi, replicate, simulate, split_seed
from .scenarios import build_scenario

__all__ = [
    "PolicyVector",
    "Regime",
    "RunRecord",
    "build_scenario",
    "evaluate_J",
    "phi",
    "replicate",
    "simulate",
    "split_seed",
]
__version__ = "0.1.0"
