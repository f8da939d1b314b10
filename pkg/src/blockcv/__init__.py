"""Model selection for directed stochastic block models.

Network generators, three edge cross-validation fold schemes,
spectral-plus-EM SBM estimation, information criteria, community
detection, and a deterministic simulation harness with report tables.
"""

__version__ = "0.1.0"

from .analysis import (
    AccuracySummary,
    DesignCell,
    ReplicateRecord,
    accuracy,
    bias_variance_of_risk,
    confusion,
    exact_recovery,
    mse_vs_truth,
    true_risk_minimizer,
    true_risk_oracle,
    variance_decomposition,
)
from .criteria import (
    CommunityResult,
    GreedyModularity,
    InfomapCommunities,
    InformationCriterion,
    InformationCriterionSelector,
    aic,
    bic,
    directed_modularity,
    greedy_modularity,
    infomap,
    map_codelength,
    select_model_ic,
    stationary_flow,
)
from .folds import (
    FoldAssignment,
    latin_assign,
    make_assignment,
    ncv_assign,
    random_assign,
    training_mask,
)
from .generate import (
    equal_block_sizes,
    memberships_from_sizes,
    planted_partition,
    powerlaw_block_sizes,
    read_edge_list,
    sample_network,
    tie_probabilities,
    write_edge_list,
)
from .risk import (
    CrossValidationSelector,
    RiskEstimate,
    cv_risk,
    mse_loss,
    select_model_cv,
)
from .sbm import (
    DirectedSBM,
    FittedSbm,
    complete_log_likelihood,
    fit_sbm,
    impute_heldout,
    kmeans,
    mle_block_probabilities,
    predict_probabilities,
    spectral_clustering,
    variational_em,
)
from .experiment import (
    ExperimentConfig,
    derive_seed,
    desk_config,
    load_records,
    records_equal,
    report,
    run_experiment,
    run_unit,
    variance_study,
)

__all__ = [name for name in dir() if not name.startswith("_")]
