use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmsGradParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AmsGradParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for AMSGrad.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: Array2<f64>,
    pub second: Array2<f64>,
    pub max_second: Array2<f64>,
    pub step: u64,
    pub params: AmsGradParams,
}

impl OptimizerState {
    pub fn new(shape: (usize, usize)) -> Self {
        Self::with_params(shape, AmsGradParams::default())
    }

    pub fn with_params(shape: (usize, usize), params: AmsGradParams) -> Self {
        Self {
            first: Array2::zeros(shape),
            second: Array2::zeros(shape),
            max_second: Array2::zeros(shape),
            step: 0,
            params,
        }
    }
}

/// One bias-corrected AMSGrad update of `weights` in place.
///
/// The running maximum is taken over raw second moments and both moments are
/// bias-corrected, so the first step moves each entry by about
/// `lr * sign(grad)`.
pub fn amsgrad_step(
    state: &mut OptimizerState,
    weights: &mut Array2<f64>,
    grad: &Array2<f64>,
    lr: f64,
) {
    assert_eq!(weights.dim(), grad.dim(), "gradient shape");
    assert_eq!(weights.dim(), state.first.dim(), "optimizer state shape");
    let AmsGradParams { beta1, beta2, eps } = state.params;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    Zip::from(weights)
        .and(grad)
        .and(&mut state.first)
        .and(&mut state.second)
        .and(&mut state.max_second)
        .for_each(|w, &g, m, v, vmax| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            if *v > *vmax {
                *vmax = *v;
            }
            let denom = (*vmax / bc2).sqrt() + eps;
            *w -= lr * (*m / bc1) / denom;
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = array![[0.3, -0.2], [1.0, 0.0]];
        let before = w.clone();
        let mut s = OptimizerState::new((2, 2));
        amsgrad_step(&mut s, &mut w, &Array2::zeros((2, 2)), 0.1);
        assert_eq!(w, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut w = Array2::zeros((1, 3));
        let g = array![[2.5, -0.01, 40.0]];
        let mut s = OptimizerState::new((1, 3));
        let lr = 1e-3;
        amsgrad_step(&mut s, &mut w, &g, lr);
        // m̂ = g, v̂ = g², update = lr * g / (|g| + eps)
        for (wi, gi) in w.iter().zip(g.iter()) {
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!((wi - expected).abs() < 1e-15);
            assert!((wi.abs() - lr).abs() < lr * 1e-5);
        }
    }

    #[test]
    fn max_accumulator_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut w = Array2::zeros((4, 3));
        let mut s = OptimizerState::new((4, 3));
        let mut prev = s.max_second.clone();
        for step in 0..100 {
            let scale = if step % 10 == 0 { 10.0 } else { 0.1 };
            let g = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-scale..scale));
            amsgrad_step(&mut s, &mut w, &g, 0.01);
            assert!(s
                .max_second
                .iter()
                .zip(&prev)
                .all(|(now, before)| now >= before));
            assert!(s.max_second.iter().zip(&s.second).all(|(m, v)| m >= v));
            prev = s.max_second.clone();
        }
        assert!(w.iter().all(|v| v.is_finite()));
    }
}
