"""wdnopt: pipe-type optimization for gravity-fed water distribution networks.

The package couples a steady-state hydraulic solver (Hazen-Williams
losses, nodal Newton iteration) with an iterated local search that sizes
every pipe over a multi-period demand horizon.
"""

from .model import (
    ContractViolation,
    DemandCategory,
    DemandModel,
    InstanceError,
    Network,
    Node,
    Pipe,
    PipeType,
    PipeTypeCatalog,
    Solution,
    base_demand,
    demand_at,
    junction,
    meshedness,
    reservoir,
    solution_cost,
    uniform_solution,
)
from .hydraulics import (
    HydraulicSolver,
    HydraulicState,
    PeriodState,
    SimulationCounter,
    SolverConfig,
    Verdict,
    Violation,
    headloss,
    headloss_gradient,
    loop_headloss_residual,
    simulate_horizon,
    simulate_period,
    validate,
    velocity,
)
from .graphs import (
    SptResult,
    bfs_levels,
    cycle_basis,
    cycle_space_dim,
    path_list,
    shortest_path_tree,
)
from .inp import (
    InpParseError,
    RunRecord,
    parse_instance,
    parse_solution,
    parse_type_catalog,
    read_run_records,
    write_run_record,
    write_solution,
)
from .search import (
    FeasibilityChecker,
    InfeasibleInstanceError,
    Pool,
    SearchParams,
    SearchStats,
    acceptance_criterion,
    brute_force_optimum,
    concentrated_perturbation,
    dispersed_perturbation,
    initial_solution,
    local_search,
    run,
    selection_criterion,
)
from .experiments import (
    ExperimentPlan,
    PairingError,
    run_experiment,
    summarize,
)

__version__ = "0.1.0"
