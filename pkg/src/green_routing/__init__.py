"""Equilibrium analysis for routing games with mixed ICEV/EV fleets."""

from .game import (
    DelayCost,
    DimensionError,
    FlowProfile,
    GameInstance,
    PlayerSpec,
    RouteSpec,
    aggregate_flows,
    game_gradient,
    marginal_route_cost,
    player_cost,
    player_costs,
    player_gradient,
    social_cost,
)
from .projection import SimplexSpec, project
from .solvers import (
    BestResponseError,
    BestResponseResult,
    SolverConfig,
    SolverReport,
    best_response,
    itproxpt,
    sird,
    social_optimum,
)
from .analysis import (
    AnalysisError,
    KktReport,
    PoaReport,
    StepBound,
    UniquenessReport,
    kkt_verify,
    ne_family_sweep,
    price_of_anarchy,
    step_size_bound,
    uniqueness_probe,
)
from .scenario import Scenario, ScenarioError, bundled_scenario_path, load_scenario

__version__ = "0.1.0"

__all__ = [
    "DelayCost", "DimensionError", "FlowProfile", "GameInstance", "PlayerSpec",
    "RouteSpec", "aggregate_flows", "game_gradient", "marginal_route_cost",
    "player_cost", "player_costs", "player_gradient", "social_cost",
    "SimplexSpec", "project",
    "BestResponseError", "BestResponseResult", "SolverConfig", "SolverReport",
    "best_response", "itproxpt", "sird", "social_optimum",
    "AnalysisError", "KktReport", "PoaReport", "StepBound", "UniquenessReport",
    "kkt_verify", "ne_family_sweep", "price_of_anarchy", "step_size_bound",
    "uniqueness_probe",
    "Scenario", "ScenarioError", "bundled_scenario_path", "load_scenario",
    "__version__",
]
