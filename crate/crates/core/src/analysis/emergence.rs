use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::simplex::{nelder_mead, SimplexOptions};
use super::AnalysisError;

/// `s(x) = a + (b − a) / (1 + exp(−(x − μ)/σ))` with `x = log10(words)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Logistic {
    pub fn eval(&self, x: f64) -> f64 {
        self.a + (self.b - self.a) / (1.0 + (-(x - self.mu) / self.sigma).exp())
    }

    /// Same function with `b ≥ a`.
    fn canonical(self) -> Self {
        if self.b < self.a {
            Self {
                a: self.b,
                b: self.a,
                mu: self.mu,
                sigma: -self.sigma,
            }
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub seed: u64,
    /// Random starts on top of the fixed grid of starts.
    pub random_starts: usize,
    /// Score range below which a curve counts as flat.
    pub degenerate_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            random_starts: 8,
            degenerate_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceCurve {
    /// `(cumulative words, score)`, sorted by words.
    pub points: Vec<(f64, f64)>,
    /// `None` when the curve is degenerate.
    pub params: Option<Logistic>,
    /// Sum of squared residuals of the chosen fit.
    pub residual: Option<f64>,
    /// Residual of every start, in start order.
    pub candidate_residuals: Vec<f64>,
    pub degenerate: bool,
}

impl EmergenceCurve {
    pub fn log10_range(&self) -> (f64, f64) {
        let xs = self.points.iter().map(|p| p.0.log10());
        let lo = xs.clone().fold(f64::INFINITY, f64::min);
        let hi = xs.fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn fitted(&self) -> Result<Logistic, AnalysisError> {
        self.params.ok_or(AnalysisError::Degenerate)
    }
}

fn sse(p: &Logistic, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (p.eval(x) - y).powi(2))
        .sum()
}

/// Least-squares logistic fit from several simplex starts; the lowest
/// residual wins, earlier starts on ties.
pub fn fit_emergence(
    points: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<EmergenceCurve, AnalysisError> {
    if points.len() < 4 {
        return Err(AnalysisError::TooFewPoints {
            need: 4,
            got: points.len(),
        });
    }
    for (i, &(w, s)) in points.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(AnalysisError::NonPositiveWords(w));
        }
        if !s.is_finite() {
            return Err(AnalysisError::NonFiniteScore(i));
        }
    }
    let mut points = points.to_vec();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let y_lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = (xs[0], xs[xs.len() - 1]);
    let flat = EmergenceCurve {
        points: points.clone(),
        params: None,
        residual: None,
        candidate_residuals: Vec::new(),
        degenerate: true,
    };
    if y_hi - y_lo < opts.degenerate_tol || x_hi - x_lo <= 0.0 {
        return Ok(flat);
    }

    // start levels follow the sign of the overall trend
    let rising = ys[ys.len() - 1] >= ys[0];
    let (a0, b0) = if rising { (y_lo, y_hi) } else { (y_hi, y_lo) };
    let span = x_hi - x_lo;
    let mut starts = Vec::new();
    for q in [0.25, 0.5, 0.75] {
        for s in [0.1, 0.25, 0.5] {
            starts.push([a0, b0, x_lo + q * span, s * span]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jitter = y_hi - y_lo;
    for _ in 0..opts.random_starts {
        starts.push([
            a0 + rng.gen_range(-0.2..0.2) * jitter,
            b0 + rng.gen_range(-0.2..0.2) * jitter,
            rng.gen_range(x_lo..=x_hi),
            span * 10f64.powf(rng.gen_range(-1.5..0.0)),
        ]);
    }

    let objective = |v: &[f64]| {
        if v[3].abs() < 1e-9 {
            return f64::INFINITY;
        }
        let p = Logistic {
            a: v[0],
            b: v[1],
            mu: v[2],
            sigma: v[3],
        };
        sse(&p, &xs, &ys)
    };
    let simplex = SimplexOptions {
        max_evals: 6000,
        f_tol: 1e-16,
        x_tol: 1e-10,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut candidate_residuals = Vec::with_capacity(starts.len());
    for start in &starts {
        let steps = [0.1 * jitter, 0.1 * jitter, 0.1 * span, 0.1 * start[3]];
        // restart once from the result to escape a collapsed simplex
        let (x1, _) = nelder_mead(objective, start, &steps, &simplex);
        let steps = [
            0.05 * jitter,
            0.05 * jitter,
            0.05 * span,
            0.05 * x1[3].abs().max(1e-3),
        ];
        let (x, fx) = nelder_mead(objective, &x1, &steps, &simplex);
        candidate_residuals.push(fx);
        if best.as_ref().is_none_or(|b| fx < b.1) {
            best = Some((x, fx));
        }
    }
    let (v, residual) = best.expect("at least one start");
    let params = Logistic {
        a: v[0],
        b: v[1],
        mu: v[2],
        sigma: v[3],
    }
    .canonical();
    if params.b - params.a < opts.degenerate_tol {
        return Ok(EmergenceCurve {
            candidate_residuals,
            ..flat
        });
    }
    Ok(EmergenceCurve {
        points,
        params: Some(params),
        residual: Some(residual),
        candidate_residuals,
        degenerate: false,
    })
}

/// Fitted scores on `grid` (log10 words), rescaled so the grid minimum maps
/// to 0 and the maximum to 1.
pub fn relative_scores(curve: &EmergenceCurve, grid: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let p = curve.fitted()?;
    let s: Vec<f64> = grid.iter().map(|&x| p.eval(x)).collect();
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(AnalysisError::Degenerate);
    }
    Ok(s.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmergencePoint {
    pub level: f64,
    pub log10_words: f64,
    pub words: f64,
    /// The crossing lies outside the observed word range.
    pub extrapolated: bool,
}

/// Word count at which the fitted curve reaches `level` of the way from its
/// floor to its ceiling.
pub fn emergence_point(
    curve: &EmergenceCurve,
    level: f64,
) -> Result<EmergencePoint, AnalysisError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(AnalysisError::LevelOutOfRange(level));
    }
    let p = curve.fitted()?;
    let x = p.mu + p.sigma * (level / (1.0 - level)).ln();
    let (lo, hi) = curve.log10_range();
    Ok(EmergencePoint {
        level,
        log10_words: x,
        words: 10f64.powf(x),
        extrapolated: x < lo || x > hi,
    })
}

/// Orders of magnitude between model and human word exposure.
pub fn data_gap(model_words: f64, human_words: f64) -> Result<f64, AnalysisError> {
    if !(model_words > 0.0 && human_words > 0.0) {
        return Err(AnalysisError::NonPositive(model_words, human_words));
    }
    Ok((model_words / human_words).log10())
}
