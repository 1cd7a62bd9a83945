"""Adaptive cubic regularization with dynamically subsampled Hessians."""
from .arc import ArcConfig, HessianVariant, IterationRecord, Trace, run
from .cubic_model import CubicModel, InnerCriterion, solve_subproblem
from .objective import CostLedger, FiniteSumProblem
from .second_order import run_so

__all__ = [
    "ArcConfig",
    "CostLedger",
    "CubicModel",
    "FiniteSumProblem",
    "HessianVariant",
    "InnerCriterion",
    "IterationRecord",
    "Trace",
    "run",
    "run_so",
    "solve_subproblem",
]

__version__ = "0.1.0"
