"""Structured gene-environment interaction analysis.

Penalized least-squares estimation and selection of main genetic effects and
gene-environment interactions under the "main effects, interactions"
hierarchy, with quadratic structure penalties for positionally adjacent or
network-linked measurements, support for censored outcomes via
Kaplan-Meier-weighted least squares, BIC tuning, and a simulation and
benchmarking harness.
"""

from .data import (
    CoefficientSet,
    Dataset,
    FullEffects,
    SparsityPattern,
    Standardization,
    derive_full_effects,
    interaction_column,
    linear_predictor,
    read_dataset_csv,
    rescale_rows,
    standardize,
    write_dataset_csv,
)
from .errors import DataError, NumericalError
from .penalties import (
    MCPParams,
    PenaltyMatrix,
    build_adjacency,
    build_laplacian_penalty,
    build_spline_penalty,
    load_penalty_triplets,
    mcp_value,
    soft_threshold,
    verify_psd,
    zero_penalty,
)
from .solver import (
    Design,
    FitResult,
    FitState,
    SolverConfig,
    fit,
    init_state,
    make_design,
    objective,
    predicted_values,
    residual_sum_of_squares,
    single_coordinate_update,
    update_alpha,
    update_beta,
    update_gamma,
)
from .aft import AftTransform, KMWeights, km_weights, prepare_aft
from .tuning import (
    PathPoint,
    TuningGrid,
    bic,
    default_grid,
    grid_search,
    lambda1_max,
    write_path_csv,
)
from .simulation import (
    ScenarioSpec,
    SimulatedData,
    TruthSet,
    gen_e_factors,
    gen_genotypes_a1,
    gen_genotypes_a2,
    gen_response,
    parse_scenario_id,
    simulate_scenario,
    true_coefficients,
)
from .evaluation import (
    OOIResult,
    SelectionCounts,
    c_statistic,
    ooi,
    pmse,
    rse,
    rsse,
    selection_metrics,
)
from .baselines import (
    MarginalResult,
    SmcpResult,
    bh_adjust,
    fit_hiermcp,
    fit_marginal,
    fit_smcp,
    marginal_screen,
)
from .pipeline import (
    METHODS,
    FittedModel,
    analyze,
    analyze_all,
    build_penalty,
    format_fit_report,
    make_grid,
)
from .benchmark import (
    BenchmarkPlan,
    aggregate_records,
    format_table,
    run_benchmark,
    run_stability,
)

__version__ = "0.1.0"
