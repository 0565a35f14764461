"""Reliability-aware placement, replication and migration of VNF chains."""
from .evaluator import (
    DivisorRule,
    compute_reservations,
    compute_utilization,
    count_operations,
    evaluate_reliability,
    simulate_server_failure,
    verify_solution,
)
from .model import InitialPlacement, Mode, ModelInstance, add_ntn_reservation, build_model, export_lp
from .network import (
    NetworkTopology,
    Path,
    PathSet,
    TopologyError,
    bundled_topology,
    compute_candidate_paths,
    compute_path_set,
    load_topology,
)
from .pipeline import two_stage_optimize
from .reliability import (
    PiecewiseLinear,
    build_penalty,
    chain_reliability_replicated,
    chain_reliability_simple,
    default_penalties,
    penalty_eval,
)
from .service import CostParams, GeneratorConfig, Scenario, ServiceChain, VNFSpec, generate_scenario, validate_scenario
from .solver import HighsBackend, CommandBackend, Solution, brute_force_solve, solve

__version__ = "0.1.0"

__all__ = [
    "CommandBackend",
    "CostParams",
    "DivisorRule",
    "GeneratorConfig",
    "HighsBackend",
    "InitialPlacement",
    "Mode",
    "ModelInstance",
    "NetworkTopology",
    "Path",
    "PathSet",
    "PiecewiseLinear",
    "Scenario",
    "ServiceChain",
    "Solution",
    "TopologyError",
    "VNFSpec",
    "add_ntn_reservation",
    "brute_force_solve",
    "build_model",
    "build_penalty",
    "bundled_topology",
    "chain_reliability_replicated",
    "chain_reliability_simple",
    "compute_candidate_paths",
    "compute_path_set",
    "compute_reservations",
    "compute_utilization",
    "count_operations",
    "default_penalties",
    "evaluate_reliability",
    "export_lp",
    "generate_scenario",
    "load_topology",
    "penalty_eval",
    "simulate_server_failure",
    "solve",
    "two_stage_optimize",
    "validate_scenario",
    "verify_solution",
]
