"""Actuarially fair Pareto-optimal sharing of residual catastrophe losses."""

from .analytic import Cara2Params, baseline_params, sensitivity_sweep, solve_zeta
from .disutility import CapDomain, DisutilityFn, validate_assumption1
from .errors import AfpoError, CapacityError, DomainError, InfeasibleParameters, InputError, StageError
from .insurance import InsurerConfig, compute_premiums, settle, settle_batch
from .pareto_rule import PiecewiseTaxRule, kkt_check
from .solver import SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "AfpoError",
    "CapDomain",
    "CapacityError",
    "Cara2Params",
    "DisutilityFn",
    "DomainError",
    "InfeasibleParameters",
    "InputError",
    "InsurerConfig",
    "PiecewiseTaxRule",
    "SolverConfig",
    "StageError",
    "baseline_params",
    "compute_premiums",
    "kkt_check",
    "sensitivity_sweep",
    "settle",
    "settle_batch",
    "solve",
    "solve_zeta",
    "validate_assumption1",
]
