use std::collections::BTreeSet;

use ndarray::Array2;

use super::MetricError;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Minimum spanning tree of a symmetric distance matrix (Kruskal). Equal
/// weights are taken in lexicographic `(i, j)` order. Edges come back as
/// sorted `(i, j)` pairs with `i < j`.
pub fn mst(distances: &Array2<f64>) -> Result<Vec<(usize, usize)>, MetricError> {
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(MetricError::NotSquare(distances.nrows(), distances.ncols()));
    }
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let w = distances[[i, j]];
            if !w.is_finite() {
                return Err(MetricError::NonFinite(i, j));
            }
            if w != distances[[j, i]] {
                return Err(MetricError::NotSymmetric(i, j));
            }
            edges.push((w, i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for (_, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree.push((i, j));
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree.sort_unstable();
    Ok(tree)
}

fn undirected(edges: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
}

/// Fraction of gold edges recovered, ignoring direction.
pub fn uuas(
    predicted: &[(usize, usize)],
    gold: &[(usize, usize)],
    n: usize,
) -> Result<f64, MetricError> {
    let expected = n.saturating_sub(1);
    if predicted.len() != expected {
        return Err(MetricError::EdgeCount {
            expected,
            found: predicted.len(),
        });
    }
    if gold.len() != expected {
        return Err(MetricError::EdgeCount {
            expected,
            found: gold.len(),
        });
    }
    if expected == 0 {
        return Ok(1.0);
    }
    let gold = undirected(gold);
    let hits = undirected(predicted).intersection(&gold).count();
    Ok(hits as f64 / expected as f64)
}

pub fn tree_weight(distances: &Array2<f64>, edges: &[(usize, usize)]) -> f64 {
    edges.iter().map(|&(a, b)| distances[[a, b]]).sum()
}
