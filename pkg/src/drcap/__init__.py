"""drcap: joint reserve-capacity and linear demand-response policy planning.

Library layout mirrors the planning pipeline: scenario data (model, ingest),
solvers (numerics), per-slot dispatch (realtime), the capacity benchmark
(capacity), the centralized linear-policy planner (linpolicy), its
price-negotiation implementation (distributed), opt-out simulation
(flexcommit), the sequential baseline (baselines), and the experiment
runner (config, experiments, report, cli).
"""

from drcap.model import (
    CapacityDecision,
    CostModel,
    PolicyParams,
    ScenarioSet,
    SupportBox,
    ValidationReport,
    social_cost,
    validate_scenarios,
    weighted_moment_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityDecision",
    "CostModel",
    "PolicyParams",
    "ScenarioSet",
    "SupportBox",
    "ValidationReport",
    "social_cost",
    "validate_scenarios",
    "weighted_moment_matrix",
    "__version__",
]
