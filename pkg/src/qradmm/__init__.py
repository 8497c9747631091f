"""Multi-block ADMM solvers for linearly constrained, generalized-lasso
penalized quantile regression, with a consensus variant for partitioned
data, criterion-based penalty tuning, synthetic benchmarks and a CLI.
"""

from .problem import (
    Problem,
    PenaltySpec,
    SolverConfig,
    check_loss,
    check_objective,
    penalty_value,
    unconstrained,
    validate_problem,
)
from .prox import (
    PolyhedronProjector,
    project_nonneg,
    project_polyhedron,
    prox_check,
    prox_penalty,
    soft_threshold,
)
from .multiblock import (
    BlockSpec,
    IterateState,
    MultiBlockProblem,
    ResidualReport,
    SolveReport,
    find_valid_partition,
    residuals_4block,
    run_extended_admm,
    verify_partition,
)
from .solvers import (
    SOLVER_NAMES,
    SolverState,
    compare_solvers,
    initial_state,
    solve,
    solve_admm3_constr,
    solve_admm3_proj,
    solve_admm4_constr,
    solve_admm4_proj,
)
from .consensus import (
    PartitionedDataset,
    aggregate_residuals,
    partition,
    partition_problem,
    solve_parallel,
)
from .tuning import (
    TuningGrid,
    default_grid,
    hbic,
    interpolation_count,
    select_lambda,
)
from .simulate import (
    MetricsReport,
    ScenarioSpec,
    build_constraint_problem,
    evaluate,
    first_difference_matrix,
    fused_lasso_matrix,
    gen_scenario,
    true_beta,
)
from . import exceptions

__version__ = "0.1.0"
