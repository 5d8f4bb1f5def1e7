//! Building blocks for chimeric forecast ensembles: quantile forecasts from
//! computational models and human forecasters are scored with the weighted interval
//! score, gaps are imputed, and the surviving rows are combined by weighted quantile
//! averaging with weights fitted by differential evolution.

pub mod elicitation;
pub mod ensemble;
pub mod imputation;
pub mod matrix;
pub mod scoring;
pub mod types;
pub mod validate;

pub use elicitation::{
    select_cutoff_submission, ElicitationError, ElicitedDistribution, IntervalHistogram,
    LogisticComponent, LogisticMixture, Submission,
};
pub use ensemble::{
    differential_evolution_minimize, fit_performance_weights, quantile_average, DeConfig,
    EnsembleError, EnsembleForecast, EnsembleLabel, WeightVector,
};
pub use imputation::{impute_matrix, ImputationLog, ImputeError, ImputerConfig, Technique};
pub use matrix::{
    apply_inclusion_per_stream, apply_inclusion_strategy, assemble_matrices, surviving_rows,
    ForecastMatrix, InclusionStrategy, MatrixError, ModelRow, TargetBlock,
};
pub use types::{
    Provenance, QuantileForecast, QuantileLevelSet, Target, TargetKey, TruthSet, TypeError,
    Variable,
};
pub use scoring::{
    crps_numeric, interval_score, paired_t_test_one_sided, score_all, weighted_interval_score,
    ScoreMatrix, ScoringError,
};
pub use validate::{validate_quantile_forecast, Finding, ValidationReport};
