//! Probe objectives and their analytic gradients.
//!
//! Both objectives depend on `B` only through projected squared distances
//! `d_ab = ||(h_a - h_b) B||²`, whose gradient is `2 (h_a - h_b)ᵀ (z_a - z_b)`
//! with `z = h B`. Gradients are accumulated as `2 Hᵀ (L Z)` where `L` is the
//! weighted pair Laplacian, never materialized.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::ProbeError;

/// A pair of element rows with its gold distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTarget {
    pub a: usize,
    pub b: usize,
    pub target: f64,
}

impl PairTarget {
    pub fn new(a: usize, b: usize, target: f64) -> Self {
        Self { a, b, target }
    }
}

/// One anchor with its positive and negative comparison nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveTerm {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Rows of `h` touched by a batch, projected once.
pub(crate) struct LocalProjection {
    index: HashMap<usize, usize>,
    h: Array2<f64>,
    z: Array2<f64>,
}

impl LocalProjection {
    pub(crate) fn new(
        b: &Array2<f64>,
        h: &Array2<f64>,
        rows: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut index = HashMap::new();
        let mut order = Vec::new();
        for r in rows {
            index.entry(r).or_insert_with(|| {
                order.push(r);
                order.len() - 1
            });
        }
        let h_loc = h.select(Axis(0), &order);
        let z = h_loc.dot(b);
        Self { index, h: h_loc, z }
    }

    fn diff(&self, a: usize, b: usize) -> Array1<f64> {
        let (ia, ib) = (self.index[&a], self.index[&b]);
        &self.z.row(ia) - &self.z.row(ib)
    }

    pub(crate) fn sq_dist(&self, a: usize, b: usize) -> f64 {
        let (ia, ib) = (self.index[&a], self.index[&b]);
        sq_diff(self.z.row(ia), self.z.row(ib))
    }

    /// Gradient of `Σ coef · d_ab` with respect to `B`.
    pub(crate) fn gradient(&self, coefs: &[(usize, usize, f64)]) -> Array2<f64> {
        let mut lz = Array2::<f64>::zeros(self.z.raw_dim());
        for &(a, b, c) in coefs {
            if c == 0.0 {
                continue;
            }
            let d = self.diff(a, b) * c;
            let (ia, ib) = (self.index[&a], self.index[&b]);
            {
                let mut row = lz.row_mut(ia);
                row += &d;
            }
            let mut row = lz.row_mut(ib);
            row -= &d;
        }
        self.h.t().dot(&lz) * 2.0
    }
}

fn sq_diff(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_pairs(h: &Array2<f64>, pairs: &[PairTarget]) -> Result<(), ProbeError> {
    if pairs.is_empty() {
        return Err(ProbeError::EmptyPairs);
    }
    let n = h.nrows();
    if let Some(p) = pairs.iter().find(|p| p.a >= n || p.b >= n) {
        return Err(ProbeError::IndexOutOfRange {
            index: p.a.max(p.b),
            rows: n,
        });
    }
    Ok(())
}

pub(crate) fn distance_terms(
    proj: &LocalProjection,
    pairs: &[PairTarget],
) -> (f64, Vec<(usize, usize, f64)>) {
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    let coefs = pairs
        .iter()
        .map(|p| {
            let r = proj.sq_dist(p.a, p.b) - p.target;
            loss += r.abs();
            // subgradient of |r| is 0 at r = 0
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            (p.a, p.b, sign * scale)
        })
        .collect();
    (loss * scale, coefs)
}

/// Mean absolute error between projected squared distances and targets.
pub fn distance_loss(
    b: &Array2<f64>,
    h: &Array2<f64>,
    pairs: &[PairTarget],
) -> Result<f64, ProbeError> {
    Ok(distance_loss_and_gradient(b, h, pairs)?.0)
}

pub fn distance_loss_gradient(
    b: &Array2<f64>,
    h: &Array2<f64>,
    pairs: &[PairTarget],
) -> Result<Array2<f64>, ProbeError> {
    Ok(distance_loss_and_gradient(b, h, pairs)?.1)
}

pub fn distance_loss_and_gradient(
    b: &Array2<f64>,
    h: &Array2<f64>,
    pairs: &[PairTarget],
) -> Result<(f64, Array2<f64>), ProbeError> {
    check_pairs(h, pairs)?;
    let proj = LocalProjection::new(b, h, pairs.iter().flat_map(|p| [p.a, p.b]));
    let (loss, coefs) = distance_terms(&proj, pairs);
    Ok((loss, proj.gradient(&coefs)))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_term(h: &Array2<f64>, term: &ContrastiveTerm) -> Result<(), ProbeError> {
    if term.positives.is_empty() {
        return Err(ProbeError::EmptyPositives(term.anchor));
    }
    if term.negatives.is_empty() {
        return Err(ProbeError::EmptyNegatives(term.anchor));
    }
    let n = h.nrows();
    for &i in std::iter::once(&term.anchor)
        .chain(&term.positives)
        .chain(&term.negatives)
    {
        if i >= n {
            return Err(ProbeError::IndexOutOfRange { index: i, rows: n });
        }
    }
    if term.positives.contains(&term.anchor) || term.negatives.contains(&term.anchor) {
        return Err(ProbeError::AnchorInComparison(term.anchor));
    }
    if term.positives.iter().any(|p| term.negatives.contains(p)) {
        return Err(ProbeError::OverlappingSets(term.anchor));
    }
    Ok(())
}

/// Loss and `(a, b, ∂loss/∂d_ab)` coefficients for each term, scaled by
/// `weight`.
pub(crate) fn contrastive_terms(
    proj: &LocalProjection,
    terms: &[ContrastiveTerm],
    weight: f64,
) -> (f64, Vec<(usize, usize, f64)>) {
    let mut loss = 0.0;
    let mut coefs = Vec::new();
    for t in terms {
        let pos: Vec<f64> = t
            .positives
            .iter()
            .map(|&j| -proj.sq_dist(t.anchor, j))
            .collect();
        let neg: Vec<f64> = t
            .negatives
            .iter()
            .map(|&j| -proj.sq_dist(t.anchor, j))
            .collect();
        let lse_pos = log_sum_exp(pos.iter().copied());
        let lse_neg = log_sum_exp(neg.iter().copied());
        loss += lse_neg - lse_pos;
        // ∂(-lse_pos)/∂d_j = softmax_j ; ∂(lse_neg)/∂d_k = -softmax_k
        for (&j, &v) in t.positives.iter().zip(&pos) {
            coefs.push((t.anchor, j, weight * (v - lse_pos).exp()));
        }
        for (&k, &v) in t.negatives.iter().zip(&neg) {
            coefs.push((t.anchor, k, -weight * (v - lse_neg).exp()));
        }
    }
    (loss * weight, coefs)
}

/// `-log(Σ_P exp(-d) / Σ_N exp(-d))` for one anchor.
pub fn contrastive_loss(
    b: &Array2<f64>,
    h: &Array2<f64>,
    term: &ContrastiveTerm,
) -> Result<f64, ProbeError> {
    Ok(contrastive_loss_and_gradient(b, h, std::slice::from_ref(term))?.0)
}

/// Mean contrastive loss over `terms` and its gradient.
pub fn contrastive_loss_and_gradient(
    b: &Array2<f64>,
    h: &Array2<f64>,
    terms: &[ContrastiveTerm],
) -> Result<(f64, Array2<f64>), ProbeError> {
    if terms.is_empty() {
        return Err(ProbeError::EmptyPairs);
    }
    for t in terms {
        check_term(h, t)?;
    }
    let proj = LocalProjection::new(
        b,
        h,
        terms.iter().flat_map(|t| {
            std::iter::once(t.anchor)
                .chain(t.positives.iter().copied())
                .chain(t.negatives.iter().copied())
        }),
    );
    let (loss, coefs) = contrastive_terms(&proj, terms, 1.0 / terms.len() as f64);
    Ok((loss, proj.gradient(&coefs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
    }

    // Scalar oracle: loops only, no shared helpers.
    fn oracle_sq(b: &Array2<f64>, h: &Array2<f64>, i: usize, j: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..b.ncols() {
            let mut s = 0.0;
            for r in 0..b.nrows() {
                s += (h[[i, r]] - h[[j, r]]) * b[[r, c]];
            }
            total += s * s;
        }
        total
    }

    #[test]
    fn zero_probe_gives_mean_target() {
        let h = array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]];
        let b = Array2::zeros((2, 2));
        let pairs = [
            PairTarget::new(0, 1, 1.0),
            PairTarget::new(0, 2, 2.0),
            PairTarget::new(1, 2, 4.0),
        ];
        assert!((distance_loss(&b, &h, &pairs).unwrap() - 7.0 / 3.0).abs() < 1e-15);
        let g = distance_loss_gradient(&b, &h, &pairs).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let doubled: Vec<_> = pairs
            .iter()
            .map(|p| PairTarget::new(p.a, p.b, 2.0 * p.target))
            .collect();
        assert_eq!(distance_loss_gradient(&b, &h, &doubled).unwrap(), g);
    }

    #[test]
    fn perfect_fit_is_zero() {
        // points already in 2-D with target = exact squared distance
        let h = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let b = Array2::eye(2);
        let pairs = [
            PairTarget::new(0, 1, 1.0),
            PairTarget::new(0, 2, 4.0),
            PairTarget::new(1, 2, 5.0),
        ];
        assert_eq!(distance_loss(&b, &h, &pairs).unwrap(), 0.0);
        assert!(distance_loss_gradient(&b, &h, &pairs)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_loss() {
        let h = array![[1.0, 0.0, 2.0], [0.0, 1.0, 1.0], [2.0, 2.0, 0.0]];
        let b = array![[1.0], [0.5], [-1.0]];
        // z = hB: [-1.0, -0.5, 3.0]; d01 = 0.25, d02 = 16, d12 = 12.25
        let pairs = [
            PairTarget::new(0, 1, 1.0),
            PairTarget::new(0, 2, 10.0),
            PairTarget::new(1, 2, 12.0),
        ];
        let expected = (0.75 + 6.0 + 0.25) / 3.0;
        assert!((distance_loss(&b, &h, &pairs).unwrap() - expected).abs() < 1e-14);
        assert!((oracle_sq(&b, &h, 1, 2) - 12.25).abs() < 1e-14);
    }

    #[test]
    fn distance_errors() {
        let h = Array2::zeros((2, 2));
        let b = Array2::zeros((2, 1));
        assert!(matches!(
            distance_loss(&b, &h, &[]),
            Err(ProbeError::EmptyPairs)
        ));
        assert!(matches!(
            distance_loss(&b, &h, &[PairTarget::new(0, 5, 1.0)]),
            Err(ProbeError::IndexOutOfRange { index: 5, rows: 2 })
        ));
    }

    #[test]
    fn contrastive_equal_distances() {
        // all points identical: every projected distance equals 0
        let h = Array2::from_elem((6, 3), 0.7);
        let b = Array2::from_elem((3, 2), 0.3);
        let term = ContrastiveTerm {
            anchor: 0,
            positives: vec![1],
            negatives: vec![2, 3, 4, 5],
        };
        assert!((contrastive_loss(&b, &h, &term).unwrap() - 4f64.ln()).abs() < 1e-12);
        let term = ContrastiveTerm {
            anchor: 0,
            positives: vec![1, 2],
            negatives: vec![3, 4],
        };
        assert!(contrastive_loss(&b, &h, &term).unwrap().abs() < 1e-12);
    }

    #[test]
    fn contrastive_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = randn(7, 4, &mut rng);
        let b = randn(4, 3, &mut rng) * 0.4;
        let term = ContrastiveTerm {
            anchor: 2,
            positives: vec![0, 5],
            negatives: vec![1, 3, 4, 6],
        };
        let num: f64 = term
            .positives
            .iter()
            .map(|&j| (-oracle_sq(&b, &h, 2, j)).exp())
            .sum();
        let den: f64 = term
            .negatives
            .iter()
            .map(|&j| (-oracle_sq(&b, &h, 2, j)).exp())
            .sum();
        let expected = -(num / den).ln();
        assert!((contrastive_loss(&b, &h, &term).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn contrastive_validation() {
        let h = Array2::zeros((4, 2));
        let b = Array2::zeros((2, 1));
        let t = |p: Vec<usize>, n: Vec<usize>| ContrastiveTerm {
            anchor: 0,
            positives: p,
            negatives: n,
        };
        assert!(matches!(
            contrastive_loss(&b, &h, &t(vec![], vec![1])),
            Err(ProbeError::EmptyPositives(0))
        ));
        assert!(matches!(
            contrastive_loss(&b, &h, &t(vec![1], vec![])),
            Err(ProbeError::EmptyNegatives(0))
        ));
        assert!(matches!(
            contrastive_loss(&b, &h, &t(vec![1], vec![1, 2])),
            Err(ProbeError::OverlappingSets(0))
        ));
        assert!(matches!(
            contrastive_loss(&b, &h, &t(vec![0], vec![2])),
            Err(ProbeError::AnchorInComparison(0))
        ));
    }

    #[test]
    fn contrastive_decreases_as_positive_approaches() {
        let b = Array2::eye(2);
        let term = ContrastiveTerm {
            anchor: 0,
            positives: vec![1],
            negatives: vec![2, 3],
        };
        let at = |x: f64| {
            let h = array![[0.0, 0.0], [x, 0.0], [1.0, 1.0], [-1.0, 1.0]];
            contrastive_loss(&b, &h, &term).unwrap()
        };
        assert!(at(0.2) < at(0.8));
        assert!(at(0.8) < at(1.5));
    }

    proptest! {
        #[test]
        fn distance_loss_is_rotation_invariant(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = randn(5, 4, &mut rng);
            let b = randn(4, 2, &mut rng);
            let rot = array![[angle.cos(), -angle.sin()], [angle.sin(), angle.cos()]];
            let pairs: Vec<_> = (0..5).flat_map(|i| (i + 1..5).map(move |j| PairTarget::new(i, j, (i + j) as f64))).collect();
            let l1 = distance_loss(&b, &h, &pairs).unwrap();
            let l2 = distance_loss(&b.dot(&rot), &h, &pairs).unwrap();
            prop_assert!((l1 - l2).abs() < 1e-9 * (1.0 + l1.abs()));
        }

        #[test]
        fn contrastive_is_translation_invariant(seed in any::<u64>(), shift in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = randn(6, 3, &mut rng);
            let b = randn(3, 2, &mut rng) * 0.5;
            let term = ContrastiveTerm { anchor: 0, positives: vec![1, 2], negatives: vec![3, 4, 5] };
            let shifted = &h + shift;
            let l1 = contrastive_loss(&b, &h, &term).unwrap();
            let l2 = contrastive_loss(&b, &shifted, &term).unwrap();
            prop_assert!((l1 - l2).abs() < 1e-9 * (1.0 + l1.abs()));
        }
    }
}
