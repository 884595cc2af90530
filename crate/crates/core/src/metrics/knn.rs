use std::collections::HashSet;

use ndarray::Array2;

use super::MetricError;

/// F1 from confusion counts; a category with no positives on either side
/// scores 1.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Indices of the `k` training rows nearest to `query` (Euclidean), ties
/// broken by element id.
pub fn nearest_neighbors(
    embeddings: &Array2<f64>,
    ids: &[String],
    train: &[usize],
    query: usize,
    k: usize,
) -> Vec<usize> {
    let q = embeddings.row(query);
    let mut scored: Vec<(f64, usize)> = train
        .iter()
        .filter(|&&t| t != query)
        .map(|&t| {
            let d: f64 = embeddings
                .row(t)
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, t)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| ids[a.1].cmp(&ids[b.1])));
    scored.into_iter().take(k).map(|(_, t)| t).collect()
}

/// Per-category F1 of k-nearest-neighbour membership prediction. A test
/// element is predicted in category `j` when a strict majority of its `k`
/// nearest training neighbours belong to `j`.
pub fn knn_f1(
    embeddings: &Array2<f64>,
    ids: &[String],
    train: &[usize],
    test: &[usize],
    categories: &[Vec<usize>],
    k: usize,
) -> Result<Vec<f64>, MetricError> {
    if train.len() < k {
        return Err(MetricError::TooFewNeighbors {
            available: train.len(),
            k,
        });
    }
    let threshold = k / 2 + 1;
    let neighbors: Vec<Vec<usize>> = test
        .iter()
        .map(|&t| nearest_neighbors(embeddings, ids, train, t, k))
        .collect();
    Ok(categories
        .iter()
        .map(|members| {
            let members: HashSet<usize> = members.iter().copied().collect();
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (&t, nn) in test.iter().zip(&neighbors) {
                let votes = nn.iter().filter(|n| members.contains(n)).count();
                match (votes >= threshold, members.contains(&t)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            f1(tp, fp, fn_)
        })
        .collect())
}
