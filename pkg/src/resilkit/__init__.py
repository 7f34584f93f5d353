"""resilkit: resilience analysis for finite controlled systems under
uncertainty.

The library models finite-horizon discrete-time systems with finite state,
control, and disturbance spaces, decides whether states are resilient under
a catalog of recovery regimes, computes resilient state sets and recovery
times, and selects risk-minimizing resilient strategies.
"""

from .errors import (
    CapacityError,
    ConfigurationError,
    InputError,
    ModelFormatError,
    ResilkitError,
)
from .model import (
    CEMETERY_LABEL,
    DEFAULT_SCENARIO_CAP,
    ControlSpace,
    StateSpace,
    SystemModel,
    TimeGrid,
    UncertaintyStructure,
    admissible_controls,
    count_scenarios,
    enumerate_scenarios,
    flow,
    in_robust_set,
    make_model,
    models_equal,
    scenario_weight,
    scenario_weights,
    state_indices,
    step,
)
from .strategy import (
    ADAPTED,
    DEFAULT_STRATEGY_CAP,
    MARKOV,
    Policy,
    Strategy,
    Trajectory,
    TrajectoryBundle,
    build_bundle,
    constant_strategy,
    count_strategies,
    enumerate_strategies,
    is_admissible,
    markov_policy_array,
    markov_strategy,
    n_prefixes,
    prefix_rank,
    simulate_closed_loop,
    strategies_equal,
    strategy_from_rank,
    strategy_from_text,
    strategy_to_text,
    validate_strategy,
)
from .regimes import (
    AtMostKExits,
    Bounded,
    ControlEvent,
    ProbExcursion,
    RiskContainment,
    RobustRecovery,
    Stabilize,
    StochasticViability,
    Viability,
    exit_times,
    recovery_time,
    regime_membership,
    validate_regime,
)
from .risk import (
    CEMETERY_PENALTY,
    AmbiguityExceedance,
    Composed,
    ControlEffort,
    CVaR,
    Exceedance,
    ExitCountFunctional,
    Expectation,
    RecoveryOffset,
    TabularCost,
    TerminalMiss,
    TimeOutside,
    WorstCase,
    WorstCaseViolation,
    cvar,
    evaluate_cost,
    evaluate_risk,
    validate_cost,
    validate_risk,
)
from .engine import (
    KernelTable,
    RecoveryTable,
    ResilientSet,
    ValueTable,
    check_resilient,
    fill_policy,
    resilient_states,
    robust_recovery_table,
    robust_viability_kernel,
    stochastic_viability_value,
)
from .optimize import (
    OptimizationResult,
    minimize_risk,
    resilience_indicator,
)
from .oracle import (
    oracle_min_risk,
    oracle_recovery_offsets,
    oracle_resilient_states,
    oracle_value,
)
from .modelfile import ParsedModel, parse_model, regime_state_set, serialize_model
from ._sim import backend_name, simulate_batch

__version__ = "0.1.0"

__all__ = [
    "ADAPTED",
    "AmbiguityExceedance",
    "AtMostKExits",
    "Bounded",
    "CEMETERY_LABEL",
    "CEMETERY_PENALTY",
    "CVaR",
    "CapacityError",
    "Composed",
    "ConfigurationError",
    "ControlEffort",
    "ControlEvent",
    "ControlSpace",
    "DEFAULT_SCENARIO_CAP",
    "DEFAULT_STRATEGY_CAP",
    "Exceedance",
    "ExitCountFunctional",
    "Expectation",
    "InputError",
    "KernelTable",
    "MARKOV",
    "ModelFormatError",
    "OptimizationResult",
    "ParsedModel",
    "Policy",
    "ProbExcursion",
    "RecoveryOffset",
    "RecoveryTable",
    "ResilientSet",
    "ResilkitError",
    "RiskContainment",
    "RobustRecovery",
    "Stabilize",
    "StateSpace",
    "StochasticViability",
    "Strategy",
    "SystemModel",
    "TabularCost",
    "TerminalMiss",
    "TimeGrid",
    "TimeOutside",
    "Trajectory",
    "TrajectoryBundle",
    "UncertaintyStructure",
    "Viability",
    "ValueTable",
    "WorstCase",
    "WorstCaseViolation",
    "admissible_controls",
    "backend_name",
    "build_bundle",
    "check_resilient",
    "constant_strategy",
    "count_scenarios",
    "count_strategies",
    "cvar",
    "enumerate_scenarios",
    "enumerate_strategies",
    "evaluate_cost",
    "evaluate_risk",
    "exit_times",
    "fill_policy",
    "flow",
    "in_robust_set",
    "is_admissible",
    "make_model",
    "markov_policy_array",
    "markov_strategy",
    "minimize_risk",
    "models_equal",
    "n_prefixes",
    "oracle_min_risk",
    "oracle_recovery_offsets",
    "oracle_resilient_states",
    "oracle_value",
    "parse_model",
    "prefix_rank",
    "recovery_time",
    "regime_membership",
    "regime_state_set",
    "resilience_indicator",
    "resilient_states",
    "robust_recovery_table",
    "robust_viability_kernel",
    "scenario_weight",
    "scenario_weights",
    "serialize_model",
    "simulate_batch",
    "simulate_closed_loop",
    "state_indices",
    "step",
    "stochastic_viability_value",
    "strategies_equal",
    "strategy_from_rank",
    "strategy_from_text",
    "strategy_to_text",
    "validate_cost",
    "validate_regime",
    "validate_risk",
    "validate_strategy",
]
