//! Probe evaluation: Spearman scores, tree decoding, rank scores and
//! category classification.

mod eval;
mod knn;
mod rank;
mod spearman;
mod tree;

use serde::Serialize;
use thiserror::Error;

pub use eval::{
    category_centroids, eval_distance_probe, eval_rank, eval_uuas, evaluation_sets,
    linear_tree_control, project, random_probe_null, squared_distances, EvalOptions,
};
pub use knn::{f1, knn_f1, nearest_neighbors};
pub use rank::{median, rank_score, RankScores};
pub use spearman::{average_ranks, pearson, spearman};
pub use tree::{mst, tree_weight, uuas};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("correlation undefined for constant input")]
    Constant,
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("non-finite distance at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("expected {expected} edges, found {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error("need {k} training neighbours, have {available}")]
    TooFewNeighbors { available: usize, k: usize },
    #[error("elements missing from activations: {}", .0.join(", "))]
    MissingElements(Vec<String>),
    #[error("probe expects {expected} units, activations have {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty category {0}")]
    EmptyCategory(usize),
    #[error("{0} requires tree or graph edges")]
    NoEdges(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupScore {
    pub group: String,
    pub score: Option<f64>,
    pub elements: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub grouping: String,
    pub aggregation: Aggregate,
    pub groups: Vec<GroupScore>,
    pub aggregate: Option<f64>,
    /// Groups whose score is undefined, e.g. constant predictions.
    pub excluded: usize,
    /// Groups too small to score.
    pub skipped: usize,
    pub elements: usize,
    pub layer: Option<u32>,
    pub checkpoint_words: Option<u64>,
}

impl EvalReport {
    pub(crate) fn from_groups(
        metric: &str,
        grouping: &str,
        aggregation: Aggregate,
        groups: Vec<GroupScore>,
        skipped: usize,
    ) -> Self {
        let mut scores: Vec<f64> = groups.iter().filter_map(|g| g.score).collect();
        let excluded = groups.len() - scores.len();
        let aggregate = match aggregation {
            Aggregate::Mean if !scores.is_empty() => {
                Some(scores.iter().sum::<f64>() / scores.len() as f64)
            }
            Aggregate::Mean => None,
            Aggregate::Median => median(&mut scores),
        };
        Self {
            metric: metric.to_string(),
            grouping: grouping.to_string(),
            aggregation,
            elements: groups.iter().map(|g| g.elements).sum(),
            groups,
            aggregate,
            excluded,
            skipped,
            layer: None,
            checkpoint_words: None,
        }
    }

    /// Recomputes the aggregate from the per-group scores.
    pub fn recompute(&self) -> Option<f64> {
        Self::from_groups(
            &self.metric,
            &self.grouping,
            self.aggregation,
            self.groups.clone(),
            0,
        )
        .aggregate
    }

    /// One row per group: `group,score,elements`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "score", "elements"])
            .expect("in-memory write");
        for g in &self.groups {
            let score = g.score.map(|s| format!("{s:.6}")).unwrap_or_default();
            w.write_record([g.group.as_str(), &score, &g.elements.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}
