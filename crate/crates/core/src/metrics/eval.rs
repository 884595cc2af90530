use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{mst, rank_score, spearman, uuas, Aggregate, EvalReport, GroupScore, MetricError};
use crate::gold::{adjacency, DependencySentence, GoldStructure};
use crate::tensor_io::ActivationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Elements per evaluation set for global gold structures.
    pub set_size: usize,
    /// Seed for assigning global elements to evaluation sets.
    pub seed: u64,
    /// Sentences shorter than this are skipped for Spearman.
    pub min_sentence_words: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            set_size: 12,
            seed: 0,
            min_sentence_words: 3,
        }
    }
}

/// Rows of `acts` for `ids`, projected through `weights`.
pub fn project(
    weights: &Array2<f64>,
    acts: &ActivationMatrix,
    ids: &[&str],
) -> Result<Array2<f64>, MetricError> {
    if weights.nrows() != acts.ncols() {
        return Err(MetricError::DimensionMismatch {
            expected: weights.nrows(),
            found: acts.ncols(),
        });
    }
    let index = acts.index();
    let mut rows = Vec::with_capacity(ids.len());
    let mut missing = Vec::new();
    for id in ids {
        match index.get(id) {
            Some(&r) => rows.push(r),
            None => missing.push(id.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(MetricError::MissingElements(missing));
    }
    let h = acts.data().select(Axis(0), &rows).mapv(f64::from);
    Ok(h.dot(weights))
}

/// Pairwise squared Euclidean distances between rows.
pub fn squared_distances(z: &Array2<f64>) -> Array2<f64> {
    let n = z.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = z
                .row(i)
                .iter()
                .zip(z.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// Partitions `0..n` into seeded random sets of `set_size`. A trailing set
/// smaller than 3 is merged into the previous one.
pub fn evaluation_sets(n: usize, set_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut sets: Vec<Vec<usize>> = order
        .chunks(set_size.max(2))
        .map(<[usize]>::to_vec)
        .collect();
    if sets.len() > 1 && sets.last().is_some_and(|s| s.len() < 3) {
        let tail = sets.pop().unwrap();
        sets.last_mut().unwrap().extend(tail);
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

fn group_spearman(gold: &Array2<f64>, predicted: &Array2<f64>, members: &[usize]) -> Option<f64> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            let g = gold[[i, j]];
            if !g.is_nan() {
                x.push(g);
                y.push(predicted[[i, j]]);
            }
        }
    }
    spearman(&x, &y).ok()
}

fn with_ids(mut r: EvalReport, acts: &ActivationMatrix) -> EvalReport {
    r.layer = Some(acts.layer);
    r.checkpoint_words = acts.checkpoint_words;
    r
}

/// Spearman correlation between gold distances and projected squared
/// distances: per sentence (mean over sentences with enough words) for
/// grouped gold, per evaluation set (mean) for global gold. Groups with an
/// undefined correlation are excluded from the mean and counted.
pub fn eval_distance_probe(
    weights: &Array2<f64>,
    acts: &ActivationMatrix,
    gold: &GoldStructure,
    opts: &EvalOptions,
) -> Result<EvalReport, MetricError> {
    let report = match gold {
        GoldStructure::Grouped(groups) => {
            let mut scores = Vec::new();
            let mut skipped = 0;
            for g in groups {
                if g.element_ids.len() < opts.min_sentence_words {
                    skipped += 1;
                    continue;
                }
                let ids: Vec<&str> = g.element_ids.iter().map(String::as_str).collect();
                let pred = squared_distances(&project(weights, acts, &ids)?);
                let members: Vec<usize> = (0..ids.len()).collect();
                scores.push(GroupScore {
                    group: g.id.clone(),
                    score: group_spearman(&g.distances, &pred, &members),
                    elements: ids.len(),
                });
            }
            EvalReport::from_groups("spearman", "sentence", Aggregate::Mean, scores, skipped)
        }
        GoldStructure::Global(g) => {
            let ids: Vec<&str> = g.element_ids.iter().map(String::as_str).collect();
            let z = project(weights, acts, &ids)?;
            let sets = evaluation_sets(ids.len(), opts.set_size, opts.seed);
            let scores = sets
                .iter()
                .enumerate()
                .map(|(s, members)| {
                    let sub = z.select(Axis(0), members);
                    let pred_sub = squared_distances(&sub);
                    let gold_sub = g
                        .distances
                        .select(Axis(0), members)
                        .select(Axis(1), members);
                    let local: Vec<usize> = (0..members.len()).collect();
                    GroupScore {
                        group: format!("set{s}"),
                        score: group_spearman(&gold_sub, &pred_sub, &local),
                        elements: members.len(),
                    }
                })
                .collect();
            EvalReport::from_groups("spearman", "set", Aggregate::Mean, scores, 0)
        }
    };
    Ok(with_ids(report, acts))
}

/// Mean UUAS of minimum-spanning-tree decoding over sentences with at least
/// two words.
pub fn eval_uuas(
    weights: &Array2<f64>,
    acts: &ActivationMatrix,
    gold: &GoldStructure,
) -> Result<EvalReport, MetricError> {
    let GoldStructure::Grouped(groups) = gold else {
        return Err(MetricError::NoEdges("uuas"));
    };
    let mut scores = Vec::new();
    let mut skipped = 0;
    for g in groups {
        let n = g.element_ids.len();
        if n < 2 {
            skipped += 1;
            continue;
        }
        let ids: Vec<&str> = g.element_ids.iter().map(String::as_str).collect();
        let pred = squared_distances(&project(weights, acts, &ids)?);
        let tree = mst(&pred)?;
        scores.push(GroupScore {
            group: g.id.clone(),
            score: Some(uuas(&tree, &g.edges, n)?),
            elements: n,
        });
    }
    Ok(with_ids(
        EvalReport::from_groups("uuas", "sentence", Aggregate::Mean, scores, skipped),
        acts,
    ))
}

/// Rank score of gold neighbours in the probe space; one group per node,
/// median aggregate.
pub fn eval_rank(
    weights: &Array2<f64>,
    acts: &ActivationMatrix,
    gold: &GoldStructure,
) -> Result<EvalReport, MetricError> {
    if !gold.has_edges() {
        return Err(MetricError::NoEdges("rank score"));
    }
    let mut scores = Vec::new();
    let mut push = |ids: &[String], edges: &[(usize, usize)]| -> Result<(), MetricError> {
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let pred = squared_distances(&project(weights, acts, &refs)?);
        let ranks = rank_score(&pred, &adjacency(ids.len(), edges));
        for (id, r) in ids.iter().zip(ranks.per_node) {
            if let Some(r) = r {
                scores.push(GroupScore {
                    group: id.clone(),
                    score: Some(r),
                    elements: 1,
                });
            }
        }
        Ok(())
    };
    match gold {
        GoldStructure::Grouped(groups) => {
            for g in groups.iter().filter(|g| g.element_ids.len() >= 2) {
                push(&g.element_ids, &g.edges)?;
            }
        }
        GoldStructure::Global(g) => push(&g.element_ids, &g.edges)?,
    }
    Ok(with_ids(
        EvalReport::from_groups("rank", "node", Aggregate::Median, scores, 0),
        acts,
    ))
}

/// Scores the same projected distances against the dependency trees and
/// against surface order.
pub fn linear_tree_control(
    weights: &Array2<f64>,
    acts: &ActivationMatrix,
    sentences: &[DependencySentence],
    opts: &EvalOptions,
) -> Result<(EvalReport, EvalReport), MetricError> {
    let gold = eval_distance_probe(
        weights,
        acts,
        &GoldStructure::from_sentences(sentences),
        opts,
    )?;
    let mut linear = eval_distance_probe(
        weights,
        acts,
        &GoldStructure::linear_control(sentences),
        opts,
    )?;
    linear.metric = "spearman_linear".into();
    Ok((gold, linear))
}

/// Mean embedding of each category's members.
pub fn category_centroids(
    embeddings: &Array2<f64>,
    categories: &[Vec<usize>],
) -> Result<Array2<f64>, MetricError> {
    let mut out = Array2::zeros((categories.len(), embeddings.ncols()));
    for (c, members) in categories.iter().enumerate() {
        if members.is_empty() {
            return Err(MetricError::EmptyCategory(c));
        }
        let mean = embeddings
            .select(Axis(0), members)
            .mean_axis(Axis(0))
            .expect("non-empty");
        out.row_mut(c).assign(&mean);
    }
    Ok(out)
}

/// Aggregate Spearman of `reps` Gaussian random probes of shape
/// `units × dim`, as a null reference band.
pub fn random_probe_null(
    acts: &ActivationMatrix,
    gold: &GoldStructure,
    dim: usize,
    reps: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<f64>, MetricError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let b = Array2::from_shape_fn((acts.ncols(), dim), |_| {
            rng.sample::<f64, _>(StandardNormal)
        });
        if let Some(s) = eval_distance_probe(&b, acts, gold, opts)?.aggregate {
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gold::GlobalGold;
    use ndarray::array;

    fn acts_from(rows: &Array2<f64>, ids: &[String]) -> ActivationMatrix {
        ActivationMatrix::new(rows.mapv(|v| v as f32), ids.to_vec()).unwrap()
    }

    #[test]
    fn exact_geometry_scores_one() {
        // 2-D points whose squared distances are the gold distances
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0]];
        let ids: Vec<String> = (0..4).map(|i| format!("e{i}")).collect();
        let gold = GoldStructure::Global(GlobalGold {
            element_ids: ids.clone(),
            distances: squared_distances(&pts),
            edges: vec![],
        });
        let r = eval_distance_probe(
            &Array2::eye(2),
            &acts_from(&pts, &ids),
            &gold,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.groups.len(), 1);
        assert!((r.aggregate.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.recompute(), r.aggregate);
    }

    #[test]
    fn zero_probe_is_excluded_not_scored() {
        let s = DependencySentence::from_heads("s", &[2, 0, 2, 3]).unwrap();
        let ids = s.element_ids();
        let h = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let r = eval_distance_probe(
            &Array2::zeros((3, 2)),
            &acts_from(&h, &ids),
            &GoldStructure::from_sentences(&[s]),
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.excluded, 1);
        assert_eq!(r.aggregate, None);
    }

    #[test]
    fn missing_elements_are_listed() {
        let s = DependencySentence::from_heads("s", &[2, 0, 2]).unwrap();
        let ids = vec!["s:1".to_string(), "s:2".to_string(), "other".to_string()];
        let err = eval_distance_probe(
            &Array2::eye(2),
            &acts_from(&Array2::zeros((3, 2)), &ids),
            &GoldStructure::from_sentences(&[s]),
            &EvalOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, MetricError::MissingElements(vec!["s:3".into()]));
    }

    #[test]
    fn chain_control_equals_gold() {
        let s = DependencySentence::from_heads("c", &[2, 3, 4, 5, 0]).unwrap();
        let ids = s.element_ids();
        let h = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let (g, l) = linear_tree_control(
            &Array2::eye(3),
            &acts_from(&h, &ids),
            &[s],
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(g.aggregate, l.aggregate);
    }

    #[test]
    fn uuas_and_rank_on_embedded_tree() {
        // star tree: centre 0 embedded at origin, leaves on axes
        let s = DependencySentence::from_heads("t", &[0, 1, 1, 1]).unwrap();
        let ids = s.element_ids();
        let h = array![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0]
        ];
        let gold = GoldStructure::from_sentences(&[s]);
        let acts = acts_from(&h, &ids);
        assert_eq!(
            eval_uuas(&Array2::eye(3), &acts, &gold).unwrap().aggregate,
            Some(1.0)
        );
        let rank = eval_rank(&Array2::eye(3), &acts, &gold).unwrap();
        // centre: 3 positives at ranks 1..3 -> 2; leaves: single positive at rank 1
        assert_eq!(
            rank.groups
                .iter()
                .map(|g| g.score.unwrap())
                .collect::<Vec<_>>(),
            vec![2.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(rank.aggregate, Some(1.0));
    }

    #[test]
    fn centroids() {
        let emb = array![[1.0, 2.0], [-1.0, -2.0], [4.0, 0.0]];
        let c = category_centroids(&emb, &[vec![2], vec![0, 1]]).unwrap();
        assert_eq!(c, array![[4.0, 0.0], [0.0, 0.0]]);
        assert!(category_centroids(&emb, &[vec![]]).is_err());
    }

    #[test]
    fn centroid_matches_coordinate_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let emb = Array2::from_shape_fn((10, 4), |_| rng.gen_range(-1.0..1.0));
        let c = category_centroids(&emb, &[(0..10).collect()]).unwrap();
        for col in 0..4 {
            let mut s = 0.0;
            for r in 0..10 {
                s += emb[[r, col]];
            }
            assert!((c[[0, col]] - s / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sets_partition_elements() {
        let sets = evaluation_sets(50, 12, 3);
        let mut all: Vec<usize> = sets.concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert!(sets.iter().all(|s| s.len() >= 3));
        assert_eq!(evaluation_sets(50, 12, 3), sets);
    }
}
