use ndarray::Array2;
use serde::Serialize;

use super::spearman::average_ranks;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankScores {
    /// Mean rank of each node's positives; `None` for nodes without any.
    pub per_node: Vec<Option<f64>>,
    pub median: Option<f64>,
    pub skipped: usize,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

/// For each node, ranks every other node by distance (1 = nearest, ties
/// averaged) and averages the ranks of its graph neighbours. The aggregate
/// is the median over scored nodes.
pub fn rank_score(distances: &Array2<f64>, adjacency: &[Vec<usize>]) -> RankScores {
    let n = distances.nrows();
    let mut per_node = Vec::with_capacity(n);
    for (i, positives) in adjacency.iter().enumerate() {
        if positives.is_empty() {
            per_node.push(None);
            continue;
        }
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let row: Vec<f64> = others.iter().map(|&j| distances[[i, j]]).collect();
        let ranks = average_ranks(&row);
        let mut total = 0.0;
        for &p in positives {
            let pos = if p < i { p } else { p - 1 };
            total += ranks[pos];
        }
        per_node.push(Some(total / positives.len() as f64));
    }
    let mut scored: Vec<f64> = per_node.iter().flatten().copied().collect();
    let skipped = per_node.len() - scored.len();
    RankScores {
        median: median(&mut scored),
        per_node,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn positives_nearest() {
        // node 0's positives 1,2,3 sit at distance 1, others at 5
        let n = 7;
        let d = Array2::from_shape_fn((n, n), |(i, j)| match (i.min(j), i.max(j)) {
            (a, b) if a == b => 0.0,
            (0, b) if b <= 3 => 1.0 + b as f64 * 0.01,
            _ => 5.0,
        });
        let mut adj = vec![Vec::new(); n];
        adj[0] = vec![1, 2, 3];
        let r = rank_score(&d, &adj);
        assert_eq!(r.per_node[0], Some(2.0)); // (3 + 1) / 2
        assert_eq!(r.skipped, n - 1);
        assert_eq!(r.median, Some(2.0));
    }

    #[test]
    fn single_positive_farthest() {
        let n = 6;
        let d = Array2::from_shape_fn((n, n), |(i, j)| (i as f64 - j as f64).abs());
        let mut adj = vec![Vec::new(); n];
        adj[0] = vec![5];
        assert_eq!(rank_score(&d, &adj).per_node[0], Some((n - 1) as f64));
    }

    #[test]
    fn matches_brute_force_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = 20;
            let raw = Array2::from_shape_fn((n, n), |_| rng.gen_range(0..6) as f64);
            let d = Array2::from_shape_fn((n, n), |(i, j)| {
                if i == j {
                    0.0
                } else {
                    raw[[i.min(j), i.max(j)]]
                }
            });
            let mut adj = vec![Vec::new(); n];
            for i in 1..n {
                let p = rng.gen_range(0..i);
                adj[i].push(p);
                adj[p].push(i);
            }
            let got = rank_score(&d, &adj);
            for i in 0..n {
                // brute force: rank(j) = 1 + #strictly closer + (#ties - 1) / 2
                let mut sum = 0.0;
                for &p in &adj[i] {
                    let closer = (0..n).filter(|&j| j != i && d[[i, j]] < d[[i, p]]).count();
                    let tied = (0..n).filter(|&j| j != i && d[[i, j]] == d[[i, p]]).count();
                    sum += 1.0 + closer as f64 + (tied as f64 - 1.0) / 2.0;
                }
                assert_eq!(got.per_node[i], Some(sum / adj[i].len() as f64));
            }
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
