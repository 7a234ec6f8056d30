"""Power-constrained sensing matrix design for noisy compressed sensing.

The package designs M x L sensing matrices that minimize an oracle lower
bound on the reconstruction MSE of a correlated K-sparse source observed
through a noisy analog channel, subject to an average transmit power budget.
The design runs in two stages: a convex Gram-matrix relaxation solved by
projected gradients, followed by a rank-M eigenvalue truncation.  Closed
forms for the degenerate noise regimes, standard baselines, Bayesian and
greedy decoders, and a Monte Carlo harness round out the toolbox.
"""

from .errors import NumericalError, ParameterError
from .model import (
    FULL_ENUMERATION_LIMIT,
    SparseSample,
    SupportEnsemble,
    SystemModel,
    draw_sparse_sample,
    exponential_correlation,
    noise_covariance,
    selection_matrix,
    simulate_channel,
    source_covariance,
    source_covariance_empirical,
)
from .metrics import (
    BoundReport,
    frame_potential,
    lmmse_mse,
    mse_lower_bound,
    mse_lower_bound_sampled,
    mutual_coherence,
    nmse,
    observation_information,
    power_matrix,
    transmit_power,
)
from .sdr import (
    GramCandidate,
    LmiReport,
    SlackWitness,
    SolverOptions,
    SolverTrace,
    canonical_witness,
    project_feasible,
    relaxed_gradient,
    relaxed_objective,
    solve_sdr,
    verify_lmi_witness,
)
from .designer import (
    SensingMatrix,
    closed_form_case1,
    closed_form_case2,
    closed_form_case3,
    closed_form_case4,
    design_gaussian,
    design_lower_bound,
    design_randomized,
    design_tight_frame,
    design_upper_bound,
    full_row_rank,
    low_rank_factor,
    power_rescale,
    refine_factor,
)
from .estimators import (
    EXHAUSTIVE_LIMIT,
    Reconstruction,
    lmmse,
    lmmse_filter,
    mmse_exhaustive,
    omp,
    oracle_mmse,
    random_omp,
)
from .experiments import (
    CANNED_FIGURES,
    DESIGN_CHOICES,
    ESTIMATOR_CHOICES,
    DesignOutcome,
    ExperimentConfig,
    ExperimentRun,
    PointResult,
    emit_results,
    fig2_config,
    fig3_config,
    fig4_config,
    fig5_config,
    run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "CANNED_FIGURES",
    "DESIGN_CHOICES",
    "DesignOutcome",
    "ESTIMATOR_CHOICES",
    "EXHAUSTIVE_LIMIT",
    "ExperimentConfig",
    "ExperimentRun",
    "FULL_ENUMERATION_LIMIT",
    "GramCandidate",
    "LmiReport",
    "NumericalError",
    "ParameterError",
    "PointResult",
    "Reconstruction",
    "SensingMatrix",
    "SlackWitness",
    "SolverOptions",
    "SolverTrace",
    "SparseSample",
    "SupportEnsemble",
    "SystemModel",
    "canonical_witness",
    "closed_form_case1",
    "closed_form_case2",
    "closed_form_case3",
    "closed_form_case4",
    "design_gaussian",
    "design_lower_bound",
    "design_randomized",
    "design_tight_frame",
    "design_upper_bound",
    "draw_sparse_sample",
    "emit_results",
    "exponential_correlation",
    "fig2_config",
    "fig3_config",
    "fig4_config",
    "fig5_config",
    "frame_potential",
    "full_row_rank",
    "lmmse",
    "lmmse_filter",
    "lmmse_mse",
    "low_rank_factor",
    "mmse_exhaustive",
    "mse_lower_bound",
    "mse_lower_bound_sampled",
    "mutual_coherence",
    "nmse",
    "noise_covariance",
    "observation_information",
    "omp",
    "oracle_mmse",
    "power_matrix",
    "power_rescale",
    "project_feasible",
    "random_omp",
    "refine_factor",
    "relaxed_gradient",
    "relaxed_objective",
    "run_sweep",
    "selection_matrix",
    "simulate_channel",
    "solve_sdr",
    "source_covariance",
    "source_covariance_empirical",
    "transmit_power",
]
