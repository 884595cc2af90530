use std::collections::HashMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{contrastive_terms, distance_terms, LocalProjection};
use super::{
    amsgrad_step, init_weights, ContrastiveTerm, Objective, OptimizerState, PairTarget, Probe,
    ProbeError, TrainConfig,
};
use crate::gold::{adjacency, GoldStructure};
use crate::metrics::{eval_distance_probe, eval_rank, evaluation_sets, EvalOptions};
use crate::tensor_io::ActivationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub probe: Probe,
    pub history: Vec<EpochLoss>,
}

/// One gold group mapped onto activation rows.
struct Unit {
    rows: Vec<usize>,
    /// Gold distance between members, `NaN` when undefined.
    distances: Array2<f64>,
    /// Neighbours of each member, as member positions.
    neighbors: Vec<Vec<usize>>,
}

/// Gold structure joined to activation rows.
enum Source {
    Groups(Vec<Unit>),
    Pool(Unit),
}

fn resolve(gold: &GoldStructure, acts: &ActivationMatrix) -> Result<Source, ProbeError> {
    let index = acts.index();
    let mut missing = Vec::new();
    let mut rows_of = |ids: &[String]| -> Vec<usize> {
        ids.iter()
            .filter_map(|id| match index.get(id.as_str()) {
                Some(&r) => Some(r),
                None => {
                    missing.push(id.clone());
                    None
                }
            })
            .collect()
    };
    let source = match gold {
        GoldStructure::Grouped(groups) => Source::Groups(
            groups
                .iter()
                .map(|g| Unit {
                    rows: rows_of(&g.element_ids),
                    distances: g.distances.clone(),
                    neighbors: adjacency(g.element_ids.len(), &g.edges),
                })
                .collect(),
        ),
        GoldStructure::Global(g) => Source::Pool(Unit {
            rows: rows_of(&g.element_ids),
            distances: g.distances.clone(),
            neighbors: g.adjacency(),
        }),
    };
    if !missing.is_empty() {
        missing.truncate(20);
        return Err(ProbeError::MissingElements(missing));
    }
    Ok(source)
}

fn unit_pairs(unit: &Unit, members: &[usize], out: &mut Vec<PairTarget>) {
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            let d = unit.distances[[i, j]];
            if !d.is_nan() {
                out.push(PairTarget::new(unit.rows[i], unit.rows[j], d));
            }
        }
    }
}

/// Anchors drawn from `members`; one sampled positive and up to `negatives`
/// sampled non-neighbours from `pool`.
fn unit_terms(
    unit: &Unit,
    members: &[usize],
    pool: &[usize],
    negatives: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<ContrastiveTerm>,
) {
    for &i in members {
        let nbrs = &unit.neighbors[i];
        if nbrs.is_empty() {
            continue;
        }
        let positive = nbrs[rng.gen_range(0..nbrs.len())];
        let candidates = pool.len().saturating_sub(1 + nbrs.len());
        if candidates == 0 {
            continue;
        }
        let negs: Vec<usize> = if candidates <= negatives {
            pool.iter()
                .copied()
                .filter(|&j| j != i && nbrs.binary_search(&j).is_err())
                .collect()
        } else {
            let mut chosen = Vec::with_capacity(negatives);
            while chosen.len() < negatives {
                let j = pool[rng.gen_range(0..pool.len())];
                if j != i && nbrs.binary_search(&j).is_err() && !chosen.contains(&j) {
                    chosen.push(j);
                }
            }
            chosen
        };
        if negs.is_empty() {
            continue;
        }
        out.push(ContrastiveTerm {
            anchor: unit.rows[i],
            positives: vec![unit.rows[positive]],
            negatives: negs.into_iter().map(|j| unit.rows[j]).collect(),
        });
    }
}

/// A batch of work units: `(unit index, member positions)`.
type Batch = Vec<(usize, Vec<usize>)>;

fn epoch_batches(
    source: &Source,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Batch>, ProbeError> {
    let units: Vec<(usize, Vec<usize>)> = match (source, cfg.batch.set_size) {
        (Source::Groups(groups), _) => {
            let mut order: Vec<usize> = (0..groups.len())
                .filter(|&g| groups[g].rows.len() >= 2)
                .collect();
            order.shuffle(rng);
            order
                .into_iter()
                .map(|g| (g, (0..groups[g].rows.len()).collect()))
                .collect()
        }
        (Source::Pool(pool), Some(m)) => {
            let mut order: Vec<usize> = (0..pool.rows.len()).collect();
            order.shuffle(rng);
            order
                .chunks(m)
                .filter(|c| c.len() >= 2)
                .map(|c| (0, c.to_vec()))
                .collect()
        }
        (Source::Pool(_), None) => {
            return Err(ProbeError::Config(
                "global gold needs batch.set_size".into(),
            ));
        }
    };
    if units.is_empty() {
        return Err(ProbeError::InsufficientData(
            "no group or set with two elements".into(),
        ));
    }
    Ok(units
        .chunks(cfg.batch.units_per_batch)
        .map(<[_]>::to_vec)
        .collect())
}

fn unit_of(source: &Source, u: usize) -> &Unit {
    match source {
        Source::Groups(groups) => &groups[u],
        Source::Pool(pool) => pool,
    }
}

/// Loss and gradient of one batch.
fn batch_step(
    source: &Source,
    batch: &Batch,
    weights: &Array2<f64>,
    h: &Array2<f64>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, Array2<f64>)> {
    match cfg.objective {
        Objective::Distance => {
            let mut pairs = Vec::new();
            for (u, members) in batch {
                unit_pairs(unit_of(source, *u), members, &mut pairs);
            }
            if pairs.is_empty() {
                return None;
            }
            let proj = LocalProjection::new(weights, h, pairs.iter().flat_map(|p| [p.a, p.b]));
            let (loss, coefs) = distance_terms(&proj, &pairs);
            Some((loss, proj.gradient(&coefs)))
        }
        Objective::Contrastive => {
            let mut terms = Vec::new();
            for (u, members) in batch {
                let unit = unit_of(source, *u);
                let pool: Vec<usize> = match source {
                    Source::Groups(_) => members.clone(),
                    Source::Pool(_) => (0..unit.rows.len()).collect(),
                };
                unit_terms(
                    unit,
                    members,
                    &pool,
                    cfg.negatives_per_anchor,
                    rng,
                    &mut terms,
                );
            }
            if terms.is_empty() {
                return None;
            }
            let proj = LocalProjection::new(
                weights,
                h,
                terms.iter().flat_map(|t| {
                    std::iter::once(t.anchor)
                        .chain(t.positives.iter().copied())
                        .chain(t.negatives.iter().copied())
                }),
            );
            let (loss, coefs) = contrastive_terms(&proj, &terms, 1.0 / terms.len() as f64);
            Some((loss, proj.gradient(&coefs)))
        }
    }
}

/// Fixed validation batches and the seed used to sample contrastive terms.
fn validation_batches(source: &Source, cfg: &TrainConfig) -> Vec<Batch> {
    let units: Vec<(usize, Vec<usize>)> = match source {
        Source::Groups(groups) => (0..groups.len())
            .filter(|&g| groups[g].rows.len() >= 2)
            .map(|g| (g, (0..groups[g].rows.len()).collect()))
            .collect(),
        Source::Pool(pool) => {
            evaluation_sets(pool.rows.len(), cfg.batch.set_size.unwrap_or(12), cfg.seed)
                .into_iter()
                .map(|s| (0, s))
                .collect()
        }
    };
    units
        .chunks(cfg.batch.units_per_batch)
        .map(<[_]>::to_vec)
        .collect()
}

fn validation_loss(
    source: &Source,
    batches: &[Batch],
    weights: &Array2<f64>,
    h: &Array2<f64>,
    cfg: &TrainConfig,
) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x05ee_d0f7_a11d);
    let losses: Vec<f64> = batches
        .iter()
        .filter_map(|b| batch_step(source, b, weights, h, cfg, &mut rng).map(|(l, _)| l))
        .collect();
    (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains a probe with AMSGrad and returns the weights with the lowest
/// validation loss (training loss when there is no validation data).
pub fn train_probe(
    cfg: &TrainConfig,
    acts: &ActivationMatrix,
    train: &GoldStructure,
    validation: &GoldStructure,
) -> Result<TrainOutcome, ProbeError> {
    cfg.validate()?;
    if cfg.objective == Objective::Contrastive && !train.has_edges() {
        return Err(ProbeError::NoEdges);
    }
    let h = acts.to_f64();
    let train_src = resolve(train, acts)?;
    let val_src = resolve(validation, acts)?;
    let val_batches = validation_batches(&val_src, cfg);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = init_weights(acts.ncols(), cfg.probe_dim, cfg.init_scale, cfg.seed)?;
    let mut state = OptimizerState::with_params(weights.dim(), cfg.optimizer);

    // selection key and the probe at that epoch
    let mut best: Option<(f64, Probe)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let batches = epoch_batches(&train_src, cfg, &mut rng)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            if let Some((loss, grad)) = batch_step(&train_src, batch, &weights, &h, cfg, &mut rng) {
                amsgrad_step(&mut state, &mut weights, &grad, cfg.learning_rate);
                total += loss;
                count += 1;
            }
        }
        if count == 0 {
            return Err(ProbeError::InsufficientData("every batch was empty".into()));
        }
        let train_loss = total / count as f64;
        let val = validation_loss(&val_src, &val_batches, &weights, &h, cfg);
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            validation: val,
        });
        let key = val.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|b| key < b.0) {
            best = Some((
                key,
                Probe {
                    weights: weights.clone(),
                    config: cfg.clone(),
                    train_loss: Some(train_loss),
                    validation_loss: val,
                    best_epoch: epoch,
                },
            ));
        }
    }
    let (_, probe) = best.expect("at least one epoch");
    Ok(TrainOutcome { probe, history })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSpacing {
    #[default]
    Linear,
    Log,
}

/// `n` learning rates from `lo` to `hi` inclusive.
pub fn lr_grid(lo: f64, hi: f64, n: usize, spacing: LrSpacing) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / last;
            match spacing {
                LrSpacing::Linear => lo + (hi - lo) * t,
                LrSpacing::Log => (lo.ln() + (hi.ln() - lo.ln()) * t).exp(),
            }
        })
        .map(|v| if v > hi { hi } else { v })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub learning_rate: f64,
    pub validation_score: Option<f64>,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: TrainConfig,
    pub best_outcome: TrainOutcome,
    pub rows: Vec<GridRow>,
}

/// Validation score used for model selection: mean Spearman for distance
/// probes, negated median rank for contrastive probes (higher is better).
pub fn validation_score(
    probe: &Probe,
    acts: &ActivationMatrix,
    validation: &GoldStructure,
    opts: &EvalOptions,
) -> Result<Option<f64>, ProbeError> {
    Ok(match probe.config.objective {
        Objective::Distance => {
            eval_distance_probe(&probe.weights, acts, validation, opts)?.aggregate
        }
        Objective::Contrastive => eval_rank(&probe.weights, acts, validation)?
            .aggregate
            .map(|r| -r),
    })
}

fn run_grid_point(
    base: &TrainConfig,
    lr: f64,
    acts: &ActivationMatrix,
    train: &GoldStructure,
    validation: &GoldStructure,
    opts: &EvalOptions,
) -> Result<(TrainOutcome, Option<f64>), ProbeError> {
    let cfg = TrainConfig {
        learning_rate: lr,
        ..base.clone()
    };
    let wrap = |e: ProbeError| ProbeError::Grid {
        lr,
        source: Box::new(e),
    };
    let outcome = train_probe(&cfg, acts, train, validation).map_err(wrap)?;
    let score = validation_score(&outcome.probe, acts, validation, opts).map_err(wrap)?;
    Ok((outcome, score))
}

/// Trains one probe per learning rate and keeps the best validation score;
/// ties go to the earlier grid entry.
pub fn grid_search(
    base: &TrainConfig,
    grid: &[f64],
    acts: &ActivationMatrix,
    train: &GoldStructure,
    validation: &GoldStructure,
    opts: &EvalOptions,
) -> Result<GridResult, ProbeError> {
    if grid.is_empty() {
        return Err(ProbeError::Config("empty learning-rate grid".into()));
    }
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        grid.par_iter()
            .map(|&lr| run_grid_point(base, lr, acts, train, validation, opts))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = grid
        .iter()
        .map(|&lr| run_grid_point(base, lr, acts, train, validation, opts))
        .collect();

    let mut rows = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, TrainOutcome)> = None;
    for (i, (&lr, result)) in grid.iter().zip(results).enumerate() {
        let (outcome, score) = result?;
        rows.push(GridRow {
            learning_rate: lr,
            validation_score: score,
            validation_loss: outcome.probe.validation_loss,
        });
        let key = score.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| key > b.1) {
            best = Some((i, key, outcome));
        }
    }
    let (i, _, best_outcome) = best.expect("non-empty grid");
    Ok(GridResult {
        best: TrainConfig {
            learning_rate: grid[i],
            ..base.clone()
        },
        best_outcome,
        rows,
    })
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<GoldStructure>();
    check::<ActivationMatrix>();
    let _: HashMap<(), ()> = HashMap::new();
}
