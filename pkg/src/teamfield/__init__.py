"""Solvers and certifiers for two-team games with mean-field coupling.

Two teams of exchangeable decision makers play a noncooperative game;
inside each team everyone shares one cost that reads both teams'
empirical action measures through fixed statistic maps. The package
computes mean-field fixed points (static and finite-horizon dynamic),
certifies them on simplex grids, and measures how far symmetric play is
from a team-optimal joint deviation at finite team sizes, exactly where
enumeration is affordable and by seeded Monte Carlo where it is not.
"""

from .core import (
    BudgetError,
    FiniteSpace,
    Kernel,
    ModelError,
    ProbVec,
    SpecValidationError,
    StatisticMap,
    TeamfieldError,
    ValidationReport,
    cost_eval_static,
    emp_measure,
    tv_distance,
    validate_dynamic_spec,
    validate_static_spec,
)
from .core.specs import DynamicGameSpec, DynamicTeamSpec, StaticGameSpec, StaticTeamSpec
from .dynamic import (
    DynamicMFEquilibrium,
    FlowProfile,
    SimulationReport,
    StagePolicy,
    dynamic_best_response_fixed_flow,
    dynamic_epsilon_estimate,
    exact_dynamic_cost,
    mf_dynamic_cost,
    propagate_mf_flow,
    simulate_finite_n,
    solve_dynamic_mf_fixed_point,
)
from .finite_n import (
    EpsilonReport,
    FiniteGameInstance,
    SweepRow,
    check_exchangeable_br_value,
    epsilon_ne_certify,
    epsilon_sweep,
    exact_cost,
    mc_cost,
    sample_team_actions,
    size_pairs,
    team_best_response_exact,
)
from .io import load_policy_pair, load_spec, policy_pair_doc, spec_doc, write_json, write_sweep_csv
from .mf_static import (
    MeanFieldProfile,
    MFEquilibrium,
    MfExploitability,
    SolverConfig,
    best_response_fixed_mf,
    grid_fixed_point_search,
    mean_field_action_law,
    mf_cost,
    mf_exploitability,
    solve_mf_fixed_point,
)
from .policies import (
    BehavioralPolicy,
    DetPolicy,
    TeamPolicy,
    anticorrelated_pair,
    behavioral_to_mixture,
    induced_seat_kernel,
    is_exchangeable,
    permute_profile,
    sample_profile,
    symmetrize,
)

__version__ = "0.1.0"

__all__ = [
    "BehavioralPolicy",
    "BudgetError",
    "DetPolicy",
    "DynamicGameSpec",
    "DynamicMFEquilibrium",
    "DynamicTeamSpec",
    "EpsilonReport",
    "FiniteGameInstance",
    "FiniteSpace",
    "FlowProfile",
    "Kernel",
    "MFEquilibrium",
    "MeanFieldProfile",
    "MfExploitability",
    "ModelError",
    "ProbVec",
    "SimulationReport",
    "SolverConfig",
    "SpecValidationError",
    "StagePolicy",
    "StaticGameSpec",
    "StaticTeamSpec",
    "StatisticMap",
    "SweepRow",
    "TeamPolicy",
    "TeamfieldError",
    "ValidationReport",
    "anticorrelated_pair",
    "behavioral_to_mixture",
    "best_response_fixed_mf",
    "check_exchangeable_br_value",
    "cost_eval_static",
    "dynamic_best_response_fixed_flow",
    "dynamic_epsilon_estimate",
    "emp_measure",
    "epsilon_ne_certify",
    "epsilon_sweep",
    "exact_cost",
    "exact_dynamic_cost",
    "grid_fixed_point_search",
    "induced_seat_kernel",
    "is_exchangeable",
    "load_policy_pair",
    "load_spec",
    "mc_cost",
    "mean_field_action_law",
    "mf_cost",
    "mf_dynamic_cost",
    "mf_exploitability",
    "permute_profile",
    "policy_pair_doc",
    "propagate_mf_flow",
    "sample_profile",
    "sample_team_actions",
    "simulate_finite_n",
    "size_pairs",
    "solve_dynamic_mf_fixed_point",
    "solve_mf_fixed_point",
    "spec_doc",
    "symmetrize",
    "team_best_response_exact",
    "tv_distance",
    "validate_dynamic_spec",
    "validate_static_spec",
    "write_json",
    "write_sweep_csv",
]
