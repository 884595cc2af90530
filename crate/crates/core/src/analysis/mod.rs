//! Cross-checkpoint and circuit-level analyses.

mod alignment;
mod emergence;
mod encoding;
mod simplex;

use thiserror::Error;

pub use alignment::{
    joint_outliers, layers_above_fraction, probe_unit_norms, subspace_alignment, UnitNorms,
};
pub use emergence::{
    data_gap, emergence_point, fit_emergence, relative_scores, EmergenceCurve, EmergencePoint,
    FitOptions, Logistic,
};
pub use encoding::{
    encode_units, incremental_r2, ridge_fit, ridge_nested_cv, sequential_folds, variance_partition,
    CvConfig, CvFit, IncrementalR2, RidgeModel, UnitEncoding, Validation, VariancePartition,
};
pub use simplex::{nelder_mead, SimplexOptions};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("word counts must be positive, got {0}")]
    NonPositiveWords(f64),
    #[error("non-finite score at point {0}")]
    NonFiniteScore(usize),
    #[error("curve is degenerate (flat scores)")]
    Degenerate,
    #[error("level {0} must lie strictly between 0 and 1")]
    LevelOutOfRange(f64),
    #[error("data gap needs positive word counts, got {0} and {1}")]
    NonPositive(f64, f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("probe has rank zero")]
    ZeroRank,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("target has zero variance")]
    ZeroVariance,
    #[error("ridge system is singular; use a positive penalty")]
    Singular,
    #[error("invalid configuration: {0}")]
    Config(String),
}
