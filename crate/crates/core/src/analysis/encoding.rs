use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub outer: usize,
    pub inner: usize,
    pub alphas: Vec<f64>,
}

impl Default for CvConfig {
    /// 5 × 5 folds, penalties `1e-3, 1e-2, …, 1e3`.
    fn default() -> Self {
        Self {
            outer: 5,
            inner: 5,
            alphas: (-3..=3).map(|e| 10f64.powi(e)).collect(),
        }
    }
}

/// How held-out predictions are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    NestedCv(CvConfig),
    /// Fit and score on all samples with a fixed penalty.
    InSample {
        alpha: f64,
    },
}

impl Default for Validation {
    fn default() -> Self {
        Self::NestedCv(CvConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub coef: Array1<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.coef) + self.intercept
    }
}

/// Ridge regression with centered features and an unpenalized intercept.
pub fn ridge_fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    alpha: f64,
) -> Result<RidgeModel, AnalysisError> {
    let (n, m) = x.dim();
    if y.len() != n {
        return Err(AnalysisError::DimensionMismatch(n, y.len()));
    }
    if n == 0 {
        return Err(AnalysisError::TooFewSamples { need: 1, got: 0 });
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
    let y_mean = y.mean().expect("n > 0");
    let xc = &x - &x_mean;
    let yc = &y - y_mean;
    let gram = xc.t().dot(&xc);
    let rhs = xc.t().dot(&yc);
    let mut a = DMatrix::from_fn(m, m, |i, j| gram[[i, j]]);
    for i in 0..m {
        a[(i, i)] += alpha;
    }
    let chol = a.cholesky().ok_or(AnalysisError::Singular)?;
    let beta = chol.solve(&DVector::from_iterator(m, rhs.iter().copied()));
    let coef = Array1::from_iter(beta.iter().copied());
    let intercept = y_mean - x_mean.dot(&coef);
    Ok(RidgeModel { coef, intercept })
}

/// `k` contiguous blocks covering `0..n`, sizes differing by at most one.
pub fn sequential_folds(n: usize, k: usize) -> Vec<Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn take_rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn take(y: ArrayView1<f64>, idx: &[usize]) -> Array1<f64> {
    y.select(Axis(0), idx)
}

fn complement(n: usize, fold: &Range<usize>) -> Vec<usize> {
    (0..fold.start).chain(fold.end..n).collect()
}

/// Penalty with the lowest inner-CV squared error; smaller penalties win ties.
fn select_alpha(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    train: &[usize],
    cfg: &CvConfig,
) -> Result<f64, AnalysisError> {
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &cfg.alphas {
        let mut err = 0.0;
        for block in sequential_folds(train.len(), cfg.inner) {
            let fit_idx: Vec<usize> = train[..block.start]
                .iter()
                .chain(&train[block.end..])
                .copied()
                .collect();
            let test_idx = &train[block];
            let model = ridge_fit(
                take_rows(x, &fit_idx).view(),
                take(y, &fit_idx).view(),
                alpha,
            )?;
            let pred = model.predict(take_rows(x, test_idx).view());
            err += pred
                .iter()
                .zip(test_idx)
                .map(|(p, &i)| (p - y[i]).powi(2))
                .sum::<f64>();
        }
        if best.is_none_or(|b| err < b.1) {
            best = Some((alpha, err));
        }
    }
    Ok(best.expect("non-empty alpha grid").0)
}

struct FoldFit {
    test: Vec<usize>,
    model: RidgeModel,
    alpha: f64,
}

fn check_inputs(
    n: usize,
    y: ArrayView1<f64>,
    validation: &Validation,
) -> Result<(), AnalysisError> {
    if y.len() != n {
        return Err(AnalysisError::DimensionMismatch(n, y.len()));
    }
    if let Validation::NestedCv(cfg) = validation {
        if cfg.outer < 2 || cfg.inner < 2 || cfg.alphas.is_empty() {
            return Err(AnalysisError::Config(
                "need ≥ 2 outer and inner folds and a penalty grid".into(),
            ));
        }
        let need = cfg.outer * cfg.inner;
        if n < need {
            return Err(AnalysisError::TooFewSamples { need, got: n });
        }
    }
    let mean = y.mean().unwrap_or(0.0);
    if y.iter()
        .all(|v| (v - mean).abs() <= 1e-12 * mean.abs().max(1.0))
    {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(())
}

fn cross_fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    validation: &Validation,
) -> Result<Vec<FoldFit>, AnalysisError> {
    let n = x.nrows();
    check_inputs(n, y, validation)?;
    match validation {
        Validation::InSample { alpha } => Ok(vec![FoldFit {
            test: (0..n).collect(),
            model: ridge_fit(x, y, *alpha)?,
            alpha: *alpha,
        }]),
        Validation::NestedCv(cfg) => sequential_folds(n, cfg.outer)
            .into_iter()
            .map(|fold| {
                let train = complement(n, &fold);
                let alpha = select_alpha(x, y, &train, cfg)?;
                let model = ridge_fit(take_rows(x, &train).view(), take(y, &train).view(), alpha)?;
                Ok(FoldFit {
                    test: fold.collect(),
                    model,
                    alpha,
                })
            })
            .collect(),
    }
}

fn pooled_r2(y: ArrayView1<f64>, pred: &[f64]) -> f64 {
    let mean = y.mean().expect("non-empty");
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = y.iter().zip(pred).map(|(v, p)| (v - p).powi(2)).sum();
    1.0 - sse / sst
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvFit {
    /// Pooled held-out `1 − SSE/SST`.
    pub r2: f64,
    /// Penalty chosen in each outer fold.
    pub alphas: Vec<f64>,
    pub folds: Vec<Range<usize>>,
    /// Held-out prediction for every sample.
    pub predictions: Vec<f64>,
}

fn assemble(fits: &[FoldFit], x: ArrayView2<f64>, y: ArrayView1<f64>) -> CvFit {
    let mut predictions = vec![0.0; y.len()];
    for f in fits {
        let pred = f.model.predict(take_rows(x, &f.test).view());
        for (&i, p) in f.test.iter().zip(pred) {
            predictions[i] = p;
        }
    }
    CvFit {
        r2: pooled_r2(y, &predictions),
        alphas: fits.iter().map(|f| f.alpha).collect(),
        folds: fits
            .iter()
            .map(|f| f.test[0]..f.test[f.test.len() - 1] + 1)
            .collect(),
        predictions,
    }
}

/// Ridge encoding score with penalties chosen by inner cross-validation.
pub fn ridge_nested_cv(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    validation: &Validation,
) -> Result<CvFit, AnalysisError> {
    let fits = cross_fit(x, y, validation)?;
    Ok(assemble(&fits, x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariancePartition {
    pub r2_semantic: f64,
    pub r2_syntax: f64,
    pub r2_total: f64,
    /// `r2_total − r2_semantic − r2_syntax`.
    pub cross_term: f64,
    pub alphas: Vec<f64>,
}

/// Joint fit on `[x_sem | x_syn]`; each block is credited with
/// `cov(y, ŷ_block) / var(y)` over the held-out predictions.
pub fn variance_partition(
    x_sem: ArrayView2<f64>,
    x_syn: ArrayView2<f64>,
    y: ArrayView1<f64>,
    validation: &Validation,
) -> Result<VariancePartition, AnalysisError> {
    if x_sem.nrows() != x_syn.nrows() {
        return Err(AnalysisError::DimensionMismatch(
            x_sem.nrows(),
            x_syn.nrows(),
        ));
    }
    let m_sem = x_sem.ncols();
    let joint = concatenate![Axis(1), x_sem, x_syn];
    let fits = cross_fit(joint.view(), y, validation)?;
    let n = y.len();
    let (mut sem, mut syn) = (vec![0.0; n], vec![0.0; n]);
    for f in &fits {
        let ps = take_rows(x_sem, &f.test).dot(&f.model.coef.slice(s![..m_sem]));
        let py = take_rows(x_syn, &f.test).dot(&f.model.coef.slice(s![m_sem..]));
        for (k, &i) in f.test.iter().enumerate() {
            sem[i] = ps[k];
            syn[i] = py[k];
        }
    }
    let cv = assemble(&fits, joint.view(), y);
    let ys = y.to_vec();
    let var = covariance(&ys, &ys);
    let r2_semantic = covariance(&ys, &sem) / var;
    let r2_syntax = covariance(&ys, &syn) / var;
    Ok(VariancePartition {
        r2_semantic,
        r2_syntax,
        r2_total: cv.r2,
        cross_term: cv.r2 - r2_semantic - r2_syntax,
        alphas: cv.alphas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementalR2 {
    pub r2_univariate: f64,
    pub r2_joint: f64,
    pub delta: f64,
}

/// Gain in held-out R² from adding subspace features to univariate ones,
/// both fits sharing one fold structure.
pub fn incremental_r2(
    x_uni: ArrayView2<f64>,
    x_sub: ArrayView2<f64>,
    y: ArrayView1<f64>,
    validation: &Validation,
) -> Result<IncrementalR2, AnalysisError> {
    if x_uni.nrows() != x_sub.nrows() {
        return Err(AnalysisError::DimensionMismatch(
            x_uni.nrows(),
            x_sub.nrows(),
        ));
    }
    let uni = ridge_nested_cv(x_uni, y, validation)?;
    let joint = ridge_nested_cv(concatenate![Axis(1), x_uni, x_sub].view(), y, validation)?;
    Ok(IncrementalR2 {
        r2_univariate: uni.r2,
        r2_joint: joint.r2,
        delta: joint.r2 - uni.r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitEncoding {
    pub unit: usize,
    pub partition: VariancePartition,
    pub incremental: Option<IncrementalR2>,
}

/// Per-unit encoding models for every column of `targets`. Units with
/// constant activity are left out.
pub fn encode_units(
    x_sem: ArrayView2<f64>,
    x_syn: ArrayView2<f64>,
    x_uni: Option<ArrayView2<f64>>,
    targets: ArrayView2<f64>,
    validation: &Validation,
) -> Result<Vec<UnitEncoding>, AnalysisError> {
    let x_sub = concatenate![Axis(1), x_sem, x_syn];
    let run = |unit: usize| -> Result<Option<UnitEncoding>, AnalysisError> {
        let y = targets.column(unit);
        let partition = match variance_partition(x_sem, x_syn, y, validation) {
            Err(AnalysisError::ZeroVariance) => return Ok(None),
            other => other?,
        };
        let incremental = x_uni
            .map(|u| incremental_r2(u, x_sub.view(), y, validation))
            .transpose()?;
        Ok(Some(UnitEncoding {
            unit,
            partition,
            incremental,
        }))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        (0..targets.ncols()).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = (0..targets.ncols()).map(run).collect();
    Ok(results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| StandardNormal.sample(rng))
    }

    #[test]
    fn folds_partition_sequentially() {
        let f = sequential_folds(23, 5);
        assert_eq!(f, vec![0..5, 5..10, 10..15, 15..19, 19..23]);
        assert_eq!(
            sequential_folds(10, 5)
                .iter()
                .map(|r| r.len())
                .sum::<usize>(),
            10
        );
    }

    #[test]
    fn scalar_ridge_matches_formula() {
        let x = ndarray::arr2(&[[1.0], [2.0], [4.0], [7.0]]);
        let y = ndarray::arr1(&[0.5, 1.5, 2.0, 5.0]);
        let alpha = 3.0;
        let m = ridge_fit(x.view(), y.view(), alpha).unwrap();
        let (xm, ym) = (3.5, 2.25);
        let sxy: f64 = x
            .column(0)
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - xm) * (b - ym))
            .sum();
        let sxx: f64 = x.column(0).iter().map(|a| (a - xm).powi(2)).sum();
        let beta = sxy / (sxx + alpha);
        assert!((m.coef[0] - beta).abs() < 1e-12);
        assert!((m.intercept - (ym - xm * beta)).abs() < 1e-12);
    }

    #[test]
    fn realizable_and_null_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(200, 6, &mut rng);
        let w = ndarray::arr1(&[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let noise = gaussian(200, 1, &mut rng).column(0).to_owned();
        let y = x.dot(&w) + &noise * 0.05;
        let fit = ridge_nested_cv(x.view(), y.view(), &Validation::default()).unwrap();
        assert!(fit.r2 >= 0.99, "{}", fit.r2);
        assert_eq!(fit.alphas.len(), 5);

        let y_null = gaussian(200, 1, &mut rng).column(0).to_owned();
        let null = ridge_nested_cv(x.view(), y_null.view(), &Validation::default()).unwrap();
        assert!(null.r2 < 0.15, "{}", null.r2);
        assert!(null.r2 <= 1.0);
    }

    #[test]
    fn input_errors() {
        let x = Array2::zeros((30, 2));
        let y = Array1::from_elem(30, 4.0);
        assert_eq!(
            ridge_nested_cv(x.view(), y.view(), &Validation::default()),
            Err(AnalysisError::ZeroVariance)
        );
        let short = Array1::from_iter((0..20).map(f64::from));
        assert!(matches!(
            ridge_nested_cv(x.slice(s![..20, ..]), short.view(), &Validation::default()),
            Err(AnalysisError::TooFewSamples { need: 25, got: 20 })
        ));
    }

    #[test]
    fn syntax_only_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sem = gaussian(250, 4, &mut rng);
        let syn = gaussian(250, 4, &mut rng);
        let y = syn.dot(&ndarray::arr1(&[1.0, 0.5, -1.0, 2.0]))
            + gaussian(250, 1, &mut rng).column(0).to_owned() * 0.3;
        let v = Validation::default();
        let p = variance_partition(sem.view(), syn.view(), y.view(), &v).unwrap();
        assert!(p.r2_syntax >= 0.9 * p.r2_total, "{p:?}");
        assert!(p.r2_semantic.abs() < 0.05, "{p:?}");
        // swapping the roles mirrors the result
        let q = variance_partition(syn.view(), sem.view(), y.view(), &v).unwrap();
        assert!(
            (q.r2_semantic - p.r2_syntax).abs() < 1e-9
                && (q.r2_syntax - p.r2_semantic).abs() < 1e-9
        );
    }

    #[test]
    fn ols_partition_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sem = gaussian(60, 3, &mut rng);
        let syn = gaussian(60, 2, &mut rng);
        let y = gaussian(60, 1, &mut rng).column(0).to_owned() + sem.column(0) + syn.column(1);
        let p = variance_partition(
            sem.view(),
            syn.view(),
            y.view(),
            &Validation::InSample { alpha: 0.0 },
        )
        .unwrap();
        assert!(p.cross_term.abs() < 1e-10, "{p:?}");
    }

    #[test]
    fn block_scores_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sem = gaussian(100, 2, &mut rng);
        let syn = gaussian(100, 2, &mut rng);
        let y =
            gaussian(100, 1, &mut rng).column(0).to_owned() + syn.column(0) - &sem.column(1) * 0.5;
        let (c, s) = (0.6f64, 0.8f64);
        let rot = ndarray::arr2(&[[c, -s], [s, c]]);
        let v = Validation::default();
        let a = variance_partition(sem.view(), syn.view(), y.view(), &v).unwrap();
        let b = variance_partition(sem.view(), syn.dot(&rot).view(), y.view(), &v).unwrap();
        assert!((a.r2_syntax - b.r2_syntax).abs() < 1e-9);
        assert!((a.r2_semantic - b.r2_semantic).abs() < 1e-9);
    }

    #[test]
    fn incremental_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let uni = gaussian(150, 2, &mut rng);
        let sub = gaussian(150, 3, &mut rng);
        let noise = gaussian(150, 1, &mut rng).column(0).to_owned() * 0.2;
        let v = Validation::default();

        let y = uni.column(0).to_owned() + &noise;
        assert!(
            incremental_r2(uni.view(), sub.view(), y.view(), &v)
                .unwrap()
                .delta
                .abs()
                < 0.05
        );
        assert!(
            incremental_r2(uni.view(), uni.view(), y.view(), &v)
                .unwrap()
                .delta
                .abs()
                < 0.05
        );

        let y = sub.column(1).to_owned() * 2.0 + &noise;
        let d = incremental_r2(uni.view(), sub.view(), y.view(), &v).unwrap();
        assert!((d.delta - d.r2_joint).abs() < 0.05, "{d:?}");
    }

    #[test]
    fn units_skip_constant_activity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sem = gaussian(50, 2, &mut rng);
        let syn = gaussian(50, 2, &mut rng);
        let mut targets = gaussian(50, 3, &mut rng);
        targets.column_mut(1).fill(1.0);
        let out = encode_units(
            sem.view(),
            syn.view(),
            Some(sem.view()),
            targets.view(),
            &Validation::default(),
        )
        .unwrap();
        assert_eq!(out.iter().map(|u| u.unit).collect::<Vec<_>>(), vec![0, 2]);
        assert!(out.iter().all(|u| u.incremental.is_some()));
    }
}
