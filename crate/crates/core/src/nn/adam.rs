//! Adam optimizer with bias-corrected first and second moments.

use super::layers::Param;
use super::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One update over a set of parameters; `t` is the 1-based step count.
pub fn adam_step<S: Scalar>(params: &mut [&mut Param<S>], cfg: &AdamConfig, t: u64) {
    assert!(t >= 1);
    let b1 = S::from_f64(cfg.beta1);
    let b2 = S::from_f64(cfg.beta2);
    let eps = S::from_f64(cfg.eps);
    let corr1 = S::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let corr2 = S::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let lr = S::from_f64(cfg.lr);
    for p in params.iter_mut() {
        for i in 0..p.data.len() {
            let g = p.grad[i];
            p.m[i] = b1 * p.m[i] + (S::ONE - b1) * g;
            p.v[i] = b2 * p.v[i] + (S::ONE - b2) * g * g;
            let mhat = p.m[i] / corr1;
            let vhat = p.v[i] / corr2;
            p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
