//! Training losses: numerically stable binary cross-entropy on logits and
//! mean absolute error, each returning the loss and its input gradient.

use super::layers::sigmoid;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Adversarial/reconstruction weighting of the combined objective.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub lambda_adv: f64,
    pub lambda_l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_adv: 1.0,
            lambda_l1: 100.0,
        }
    }
}

/// Mean binary cross-entropy between logits and a constant target (0 or 1),
/// computed as max(z,0) - z*t + ln(1 + exp(-|z|)) so large logits of either
/// sign cannot overflow. Returns (loss, d_loss/d_logits).
pub fn bce_with_logits<S: Scalar>(logits: &Tensor<S>, target: f64) -> (S, Tensor<S>) {
    let t = S::from_f64(target);
    let n = S::from_f64(logits.numel() as f64);
    let mut loss = S::ZERO;
    let mut grad = Tensor::zeros(logits.shape);
    for (g, &z) in grad.data.iter_mut().zip(&logits.data) {
        let zpos = z.maxv(S::ZERO);
        loss += zpos - z * t + (S::ONE + (-z.abs()).exp()).ln();
        *g = (sigmoid(z) - t) / n;
    }
    (loss / n, grad)
}

/// Mean absolute error; the subgradient at zero is taken as zero.
/// Returns (loss, d_loss/d_pred).
pub fn l1_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> (S, Tensor<S>) {
    assert_eq!(pred.shape, target.shape);
    let n = S::from_f64(pred.numel() as f64);
    let mut loss = S::ZERO;
    let mut grad = Tensor::zeros(pred.shape);
    for ((g, &p), &t) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - t;
        loss += d.abs();
        *g = if d > S::ZERO {
            S::ONE / n
        } else if d < S::ZERO {
            -S::ONE / n
        } else {
            S::ZERO
        };
    }
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_is_finite_for_extreme_logits() {
        let z = Tensor::from_vec([1, 1, 1, 4], vec![-1000.0f64, -30.0, 30.0, 1000.0]);
        let (l1, _) = bce_with_logits(&z, 1.0);
        let (l0, _) = bce_with_logits(&z, 0.0);
        assert!(l1.is_finite() && l0.is_finite());
        // Target 1 with logit 1000 contributes ~0; logit -1000 contributes ~1000.
        let single = Tensor::from_vec([1, 1, 1, 1], vec![1000.0f64]);
        let (l, _) = bce_with_logits(&single, 1.0);
        assert!(l < 1e-10);
        let (l, _) = bce_with_logits(&single, 0.0);
        assert!((l - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn bce_matches_naive_formula_in_safe_range() {
        let z = Tensor::from_vec([1, 1, 1, 3], vec![-2.0f64, 0.3, 1.7]);
        for &t in &[0.0, 1.0] {
            let (l, _) = bce_with_logits(&z, t);
            let naive: f64 = z
                .data
                .iter()
                .map(|&zv| {
                    let p = 1.0 / (1.0 + (-zv).exp());
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / 3.0;
            assert!((l - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let z = Tensor::from_vec([1, 1, 1, 5], vec![-3.0f64, -0.5, 0.0, 0.9, 4.0]);
        for &t in &[0.0, 1.0] {
            let (_, g) = bce_with_logits(&z, t);
            let eps = 1e-6;
            for i in 0..5 {
                let mut p = z.clone();
                p.data[i] += eps;
                let mut m = z.clone();
                m.data[i] -= eps;
                let numeric = (bce_with_logits(&p, t).0 - bce_with_logits(&m, t).0) / (2.0 * eps);
                assert!((g.data[i] - numeric).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn l1_loss_and_gradient() {
        let p = Tensor::from_vec([1, 1, 1, 4], vec![0.5f64, 0.0, 1.0, 0.25]);
        let t = Tensor::from_vec([1, 1, 1, 4], vec![0.0f64, 0.5, 1.0, 0.75]);
        let (l, g) = l1_loss(&p, &t);
        assert!((l - (0.5 + 0.5 + 0.0 + 0.5) / 4.0).abs() < 1e-12);
        assert_eq!(g.data, vec![0.25, -0.25, 0.0, -0.25]);
    }
}
