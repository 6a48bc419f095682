"""k-submodular maximization through the multilinear extension."""

from .core import (
    CoverageFunction,
    KSubFunction,
    ResidualFunction,
    TabularFunction,
    ValidationReport,
    brute_force_max,
    marginal_gain,
    max_marginal,
    validate_ksubmodular,
    validate_monotone,
)
from .errors import (
    ConfigError,
    DomainError,
    GuardRefusal,
    KSubError,
    ParseError,
    PreconditionError,
    RuleContractError,
)
from .extension import EstimatorConfig, eval_exact, eval_sampled, grad_exact, grad_sampled, hessian_exact
from .optimize import (
    OptimizerConfig,
    RunReport,
    argmax_gradient_rule,
    knapsack_full_pipeline,
    knapsack_greedy,
    meta_maximize,
    plugin_direction_rule,
)
from .polytope import ConstraintSet, Knapsack, is_feasible, max_step
from .rounding import RoundingConfig, TailReport, round_batch

__version__ = "0.1.0"
