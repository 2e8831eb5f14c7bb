//! Precision-recall and ROC curves with exact distinct-value threshold
//! sweeps (capped by quantile subsampling).

use super::MetricError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Ordered curve points (thresholds strictly decreasing) plus the area
/// under the curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve<P> {
    pub points: Vec<P>,
    pub auc: f64,
}

/// Thresholds at every distinct probability value, descending, capped at
/// `cap` by quantile subsampling (the highest and lowest values always
/// survive).
fn threshold_sweep(probs: &[f64], cap: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = probs.to_vec();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    if cap >= 2 && distinct.len() > cap {
        let n = distinct.len();
        let picked: Vec<f64> = (0..cap)
            .map(|i| distinct[(i as f64 * (n - 1) as f64 / (cap - 1) as f64).round() as usize])
            .collect();
        let mut picked = picked;
        picked.dedup();
        return picked;
    }
    distinct
}

/// Precision-recall curve; AUC is the average-precision sum
/// sum_i (R_i - R_{i-1}) * P_i over the descending-threshold sweep.
pub fn pr_curve(
    probs: &[f64],
    truth: &[bool],
    n_thresholds: usize,
) -> Result<Curve<PrPoint>, MetricError> {
    if probs.len() != truth.len() {
        return Err(MetricError::GeometryMismatch {
            pred: (1, 1, probs.len()),
            truth: (1, 1, truth.len()),
        });
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(MetricError::UndefinedCurve("truth has no positive voxels"));
    }
    let sweep = threshold_sweep(probs, n_thresholds);
    let sorted = sorted_by_prob(probs, truth);
    let mut points = Vec::with_capacity(sweep.len());
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    let mut cursor = 0usize;
    let (mut tp, mut fp) = (0u64, 0u64);
    for &thr in &sweep {
        // accumulate all voxels with prob >= thr
        while cursor < sorted.len() && sorted[cursor].0 >= thr {
            if sorted[cursor].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            cursor += 1;
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / positives as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold: thr,
            precision,
            recall,
        });
    }
    Ok(Curve { points, auc })
}

/// ROC curve; AUC by the trapezoid rule over (FPR, TPR) with implicit
/// endpoints (0,0) and (1,1).
pub fn roc_curve(
    probs: &[f64],
    truth: &[bool],
    n_thresholds: usize,
) -> Result<Curve<RocPoint>, MetricError> {
    if probs.len() != truth.len() {
        return Err(MetricError::GeometryMismatch {
            pred: (1, 1, probs.len()),
            truth: (1, 1, truth.len()),
        });
    }
    let positives = truth.iter().filter(|&&t| t).count() as u64;
    let negatives = truth.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::UndefinedCurve("truth has a single class"));
    }
    let sweep = threshold_sweep(probs, n_thresholds);
    let sorted = sorted_by_prob(probs, truth);
    let mut points = Vec::with_capacity(sweep.len());
    let mut auc = 0.0;
    let (mut prev_fpr, mut prev_tpr) = (0.0, 0.0);
    let mut cursor = 0usize;
    let (mut tp, mut fp) = (0u64, 0u64);
    for &thr in &sweep {
        while cursor < sorted.len() && sorted[cursor].0 >= thr {
            if sorted[cursor].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            cursor += 1;
        }
        let tpr = tp as f64 / positives as f64;
        let fpr = fp as f64 / negatives as f64;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        (prev_fpr, prev_tpr) = (fpr, tpr);
        points.push(RocPoint {
            threshold: thr,
            fpr,
            tpr,
        });
    }
    // close the curve at (1,1)
    auc += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    Ok(Curve { points, auc })
}

fn sorted_by_prob(probs: &[f64], truth: &[bool]) -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = probs.iter().cloned().zip(truth.iter().cloned()).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ap_of_four_voxel_example_is_five_sixths() {
        let probs = [0.9, 0.8, 0.4, 0.1];
        let truth = [true, false, true, false];
        let c = pr_curve(&probs, &truth, 1000).unwrap();
        assert!((c.auc - 5.0 / 6.0).abs() < 1e-15, "AP {}", c.auc);
    }

    #[test]
    fn perfect_scores_give_ap_one() {
        let truth: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        let probs: Vec<f64> = truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let c = pr_curve(&probs, &truth, 1000).unwrap();
        assert_eq!(c.auc, 1.0);
    }

    #[test]
    fn constant_probability_ap_equals_prevalence() {
        let truth: Vec<bool> = (0..40).map(|i| i < 10).collect();
        let probs = vec![0.5; 40];
        let c = pr_curve(&probs, &truth, 1000).unwrap();
        assert!((c.auc - 0.25).abs() < 1e-15);
        assert_eq!(c.points.len(), 1);
    }

    #[test]
    fn inverted_perfect_scores_low_ap_high_recall_precision_is_prevalence() {
        let truth: Vec<bool> = (0..40).map(|i| i < 10).collect();
        let probs: Vec<f64> = truth.iter().map(|&t| if t { 0.0 } else { 1.0 }).collect();
        let c = pr_curve(&probs, &truth, 1000).unwrap();
        let last = c.points.last().unwrap();
        assert_eq!(last.recall, 1.0);
        assert!((last.precision - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_truth_curve_is_error() {
        assert!(pr_curve(&[0.5, 0.2], &[false, false], 10).is_err());
        assert!(roc_curve(&[0.5, 0.2], &[true, true], 10).is_err());
    }

    #[test]
    fn roc_perfect_and_inverted() {
        let truth: Vec<bool> = (0..30).map(|i| i % 2 == 0).collect();
        let perfect: Vec<f64> = truth.iter().map(|&t| if t { 0.9 } else { 0.1 }).collect();
        assert_eq!(roc_curve(&perfect, &truth, 100).unwrap().auc, 1.0);
        let inverted: Vec<f64> = truth.iter().map(|&t| if t { 0.1 } else { 0.9 }).collect();
        assert_eq!(roc_curve(&inverted, &truth, 100).unwrap().auc, 0.0);
    }

    #[test]
    fn roc_random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let probs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let c = roc_curve(&probs, &truth, 512).unwrap();
        assert!((c.auc - 0.5).abs() < 0.05, "AUC {}", c.auc);
    }

    #[test]
    fn thresholds_strictly_decreasing_and_capped() {
        let probs: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let truth: Vec<bool> = (0..1000).map(|i| i > 500).collect();
        let c = pr_curve(&probs, &truth, 64).unwrap();
        assert!(c.points.len() <= 64);
        for w in c.points.windows(2) {
            assert!(w[1].threshold < w[0].threshold);
        }
        assert!((0.0..=1.0).contains(&c.auc));
    }
}
