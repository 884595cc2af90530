use nalgebra::DMatrix;
use ndarray::Array2;
use serde::Serialize;

use super::AnalysisError;
use crate::metrics::median;

const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the column space of a `k × p` probe.
fn column_basis(b: &Array2<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    let m = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[[i, j]]);
    let svd = m.svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| top > 0.0 && svd.singular_values[i] > RANK_TOL * top)
        .collect();
    if keep.is_empty() {
        return Err(AnalysisError::ZeroRank);
    }
    Ok(u.select_columns(&keep))
}

/// Mean squared cosine of the principal angles between the column spaces of
/// two probes, normalized by the smaller rank.
pub fn subspace_alignment(b1: &Array2<f64>, b2: &Array2<f64>) -> Result<f64, AnalysisError> {
    if b1.nrows() != b2.nrows() {
        return Err(AnalysisError::DimensionMismatch(b1.nrows(), b2.nrows()));
    }
    let v1 = column_basis(b1)?;
    let v2 = column_basis(b2)?;
    let overlap = v1.transpose() * &v2;
    let n = v1.ncols().min(v2.ncols()) as f64;
    Ok((overlap.norm_squared() / n).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitNorms {
    /// Euclidean norm of each unit's probe weights (one per row).
    pub norms: Vec<f64>,
    pub median: f64,
    pub factor: f64,
    /// Units whose norm is at least `factor` times the median.
    pub outliers: Vec<usize>,
}

pub fn probe_unit_norms(b: &Array2<f64>, factor: f64) -> UnitNorms {
    let norms: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let med = median(&mut norms.clone()).unwrap_or(0.0);
    let outliers = norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| med > 0.0 && v >= factor * med)
        .map(|(i, _)| i)
        .collect();
    UnitNorms {
        norms,
        median: med,
        factor,
        outliers,
    }
}

/// Units flagged as outliers in both probes.
pub fn joint_outliers(a: &UnitNorms, b: &UnitNorms) -> Vec<usize> {
    a.outliers
        .iter()
        .copied()
        .filter(|u| b.outliers.binary_search(u).is_ok())
        .collect()
}

/// Layers whose score is at least `fraction` of the best layer's score.
pub fn layers_above_fraction(scores: &[(u32, f64)], fraction: f64) -> Vec<u32> {
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .filter(|s| s.1 >= fraction * best)
        .map(|s| s.0)
        .collect()
}
