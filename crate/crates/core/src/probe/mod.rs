//! Linear structural probes: objectives, AMSGrad, training and learning-rate
//! search.

mod loss;
mod optim;
mod train;

use ndarray::Array2;
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loss::{
    contrastive_loss, contrastive_loss_and_gradient, distance_loss, distance_loss_and_gradient,
    distance_loss_gradient, ContrastiveTerm, PairTarget,
};
pub use optim::{amsgrad_step, AmsGradParams, OptimizerState};
pub use train::{
    grid_search, lr_grid, train_probe, validation_score, EpochLoss, GridResult, GridRow, LrSpacing,
    TrainOutcome,
};

use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("probe dimension {p} exceeds unit count {k}")]
    DimTooLarge { p: usize, k: usize },
    #[error("probe dimension must be at least 1")]
    ZeroDim,
    #[error("empty pair set")]
    EmptyPairs,
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("anchor {0} has no positives")]
    EmptyPositives(usize),
    #[error("anchor {0} has no negatives")]
    EmptyNegatives(usize),
    #[error("anchor {0} appears among its own comparisons")]
    AnchorInComparison(usize),
    #[error("positive and negative sets overlap for anchor {0}")]
    OverlappingSets(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("need at least one training batch: {0}")]
    InsufficientData(String),
    #[error("elements missing from activations: {}", .0.join(", "))]
    MissingElements(Vec<String>),
    #[error("contrastive objective needs tree or graph edges")]
    NoEdges,
    #[error("learning rate {lr:e}: {source}")]
    Grid {
        lr: f64,
        #[source]
        source: Box<ProbeError>,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Distance,
    Contrastive,
}

/// How training units are batched.
///
/// With `set_size` unset, units are the gold structure's own groups
/// (sentences). With `set_size = m`, training elements of a global structure
/// are shuffled each epoch and cut into sets of `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub units_per_batch: usize,
    pub set_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub probe_dim: usize,
    pub epochs: usize,
    pub init_scale: f64,
    pub batch: BatchSpec,
    pub seed: u64,
    pub objective: Objective,
    pub negatives_per_anchor: usize,
    pub optimizer: AmsGradParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::syntax()
    }
}

impl TrainConfig {
    /// 768-d phoneme probe, one set of 200 phonemes per batch.
    pub fn phoneme() -> Self {
        Self {
            learning_rate: 1e-5,
            probe_dim: 768,
            epochs: 100,
            init_scale: 1e-5,
            batch: BatchSpec {
                units_per_batch: 1,
                set_size: Some(200),
            },
            seed: 0,
            objective: Objective::Distance,
            negatives_per_anchor: 50,
            optimizer: AmsGradParams::default(),
        }
    }

    /// 200-d semantic probe, 300 sets of 12 words per batch.
    pub fn semantic() -> Self {
        Self {
            learning_rate: 5e-5,
            probe_dim: 200,
            epochs: 300,
            batch: BatchSpec {
                units_per_batch: 300,
                set_size: Some(12),
            },
            ..Self::phoneme()
        }
    }

    /// 200-d syntactic probe, 300 sentences per batch.
    pub fn syntax() -> Self {
        Self {
            learning_rate: 1e-5,
            probe_dim: 200,
            epochs: 2,
            batch: BatchSpec {
                units_per_batch: 300,
                set_size: None,
            },
            ..Self::phoneme()
        }
    }

    /// Contrastive variant; semantic probes train for 1000 epochs.
    pub fn contrastive(mut self) -> Self {
        if self.batch.set_size.is_some() && self.epochs < 1000 {
            self.epochs = 1000;
        }
        self.objective = Objective::Contrastive;
        self
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ProbeError::Config(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ProbeError::Config("epochs must be >= 1".into()));
        }
        if self.batch.units_per_batch == 0 || self.batch.set_size == Some(0) {
            return Err(ProbeError::Config("batch sizes must be >= 1".into()));
        }
        if self.probe_dim == 0 {
            return Err(ProbeError::ZeroDim);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// `k × p` projection.
    #[serde(skip)]
    pub weights: Array2<f64>,
    pub config: TrainConfig,
    pub train_loss: Option<f64>,
    pub validation_loss: Option<f64>,
    pub best_epoch: usize,
}

impl Probe {
    pub fn units(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// `k × p` matrix with entries uniform on `[-scale, scale]`.
pub fn init_weights(k: usize, p: usize, scale: f64, seed: u64) -> Result<Array2<f64>, ProbeError> {
    if p == 0 {
        return Err(ProbeError::ZeroDim);
    }
    if p > k {
        return Err(ProbeError::DimTooLarge { p, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-scale, scale);
    Ok(Array2::from_shape_fn((k, p), |_| rng.sample(dist)))
}

/// Untrained probe with the default `1e-5` initialization.
pub fn init_probe(k: usize, p: usize, seed: u64) -> Result<Probe, ProbeError> {
    let config = TrainConfig {
        probe_dim: p,
        seed,
        ..TrainConfig::default()
    };
    Ok(Probe {
        weights: init_weights(k, p, config.init_scale, seed)?,
        config,
        train_loss: None,
        validation_loss: None,
        best_epoch: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_bounds_and_determinism() {
        let p = init_probe(768, 200, 4).unwrap();
        assert_eq!(p.weights.dim(), (768, 200));
        assert!(p.weights.iter().all(|v| v.abs() <= 1e-5));
        assert!(p.weights.iter().any(|v| v.abs() > 5e-6));
        assert_eq!(init_probe(768, 200, 4).unwrap().weights, p.weights);
        assert_ne!(init_probe(768, 200, 5).unwrap().weights, p.weights);
    }

    #[test]
    fn init_rejects_wide_probe() {
        assert!(matches!(
            init_probe(4, 5, 0),
            Err(ProbeError::DimTooLarge { p: 5, k: 4 })
        ));
        assert!(matches!(init_probe(4, 0, 0), Err(ProbeError::ZeroDim)));
    }

    #[test]
    fn presets() {
        assert_eq!(TrainConfig::phoneme().batch.set_size, Some(200));
        assert_eq!(TrainConfig::semantic().batch.units_per_batch, 300);
        assert_eq!(TrainConfig::semantic().contrastive().epochs, 1000);
        assert_eq!(TrainConfig::syntax().contrastive().epochs, 2);
        let mut bad = TrainConfig::syntax();
        bad.learning_rate = 0.0;
        assert!(bad.validate().is_err());
    }
}
