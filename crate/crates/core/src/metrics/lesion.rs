//! Lesion-level confusion counts and the normal-vs-abnormal WMH matrix.

use super::{ConfusionCounts, MetricError};
use crate::binmorph::{label_components, Connectivity};
use crate::postproc::ClassProbabilities;
use crate::types::{ClassMask, CLASS_ABNORMAL_WMH, CLASS_NORMAL_WMH};

/// Lesion-level counts. TN is undefined at the lesion level; it is reported
/// as 0 with `tn_defined == false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct LesionConfusion {
    pub counts: ConfusionCounts,
    pub tn_defined: bool,
}

/// Lesions are 8-connected components of `class_id` in each mask. A truth
/// lesion counts as TP when at least one voxel overlaps any predicted
/// lesion of the same class (many-to-one allowed), else FN; a predicted
/// lesion overlapping no truth lesion is FP.
pub fn lesion_confusion(
    pred: &ClassMask,
    truth: &ClassMask,
    class_id: u8,
) -> Result<LesionConfusion, MetricError> {
    if (pred.height, pred.width) != (truth.height, truth.width) {
        return Err(MetricError::GeometryMismatch {
            pred: (1, pred.height, pred.width),
            truth: (1, truth.height, truth.width),
        });
    }
    let (h, w) = (truth.height, truth.width);
    let pred_bin = pred.class_mask(class_id);
    let truth_bin = truth.class_mask(class_id);
    let (pred_labels, pred_n) = label_components(&pred_bin, h, w, Connectivity::Eight);
    let (truth_labels, truth_n) = label_components(&truth_bin, h, w, Connectivity::Eight);

    let mut truth_hit = vec![false; truth_n + 1];
    let mut pred_hit = vec![false; pred_n + 1];
    for i in 0..h * w {
        if pred_labels[i] != 0 && truth_labels[i] != 0 {
            truth_hit[truth_labels[i] as usize] = true;
            pred_hit[pred_labels[i] as usize] = true;
        }
    }
    let tp = truth_hit[1..].iter().filter(|&&v| v).count() as u64;
    let fn_ = truth_n as u64 - tp;
    let fp = pred_hit[1..].iter().filter(|&&v| !v).count() as u64;
    Ok(LesionConfusion {
        counts: ConfusionCounts {
            tp,
            fp,
            fn_,
            tn: 0,
        },
        tn_defined: false,
    })
}

/// 2x2 voxel matrix over {normal WMH, abnormal WMH}, restricted to voxels
/// labeled WMH in the truth. `matrix[t][p]` counts truth class `t`
/// predicted as class `p` with index 0 = normal, 1 = abnormal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct WmhTypeMatrix {
    pub matrix: [[u64; 2]; 2],
    /// Truth-WMH voxels the prediction labeled neither WMH class; excluded
    /// from the matrix.
    pub unassigned: u64,
}

impl WmhTypeMatrix {
    /// Fraction of truth-abnormal voxels predicted abnormal.
    pub fn abnormal_sensitivity(&self) -> f64 {
        let total = self.matrix[1][0] + self.matrix[1][1];
        if total == 0 {
            return 0.0;
        }
        self.matrix[1][1] as f64 / total as f64
    }
}

/// Label-driven matrix: each truth-WMH voxel is tabulated by its predicted
/// WMH class; voxels predicted outside {normal, abnormal} are counted as
/// `unassigned`.
pub fn normal_vs_abnormal_matrix(
    pred: &ClassMask,
    truth: &ClassMask,
) -> Result<WmhTypeMatrix, MetricError> {
    let decide = |i: usize| match pred.labels[i] {
        l if l == CLASS_NORMAL_WMH => Some(0usize),
        l if l == CLASS_ABNORMAL_WMH => Some(1usize),
        _ => None,
    };
    tabulate(pred, truth, decide)
}

/// Probability-driven matrix: a truth-WMH voxel is predicted abnormal where
/// p_abnormal / (p_abnormal + p_normal) >= threshold (paper operating point
/// 0.3), else normal.
pub fn normal_vs_abnormal_matrix_from_probs(
    probs: &ClassProbabilities,
    truth: &ClassMask,
    threshold: f64,
) -> Result<WmhTypeMatrix, MetricError> {
    let decide = |i: usize| {
        let pn = probs.probs[CLASS_NORMAL_WMH as usize][i];
        let pa = probs.probs[CLASS_ABNORMAL_WMH as usize][i];
        if pn + pa == 0.0 {
            return Some(0usize);
        }
        Some(usize::from(pa / (pa + pn) >= threshold))
    };
    if (probs.height, probs.width) != (truth.height, truth.width) {
        return Err(MetricError::GeometryMismatch {
            pred: (1, probs.height, probs.width),
            truth: (1, truth.height, truth.width),
        });
    }
    tabulate_inner(truth, decide)
}

fn tabulate(
    pred: &ClassMask,
    truth: &ClassMask,
    decide: impl Fn(usize) -> Option<usize>,
) -> Result<WmhTypeMatrix, MetricError> {
    if (pred.height, pred.width) != (truth.height, truth.width) {
        return Err(MetricError::GeometryMismatch {
            pred: (1, pred.height, pred.width),
            truth: (1, truth.height, truth.width),
        });
    }
    tabulate_inner(truth, decide)
}

fn tabulate_inner(
    truth: &ClassMask,
    decide: impl Fn(usize) -> Option<usize>,
) -> Result<WmhTypeMatrix, MetricError> {
    let mut matrix = [[0u64; 2]; 2];
    let mut unassigned = 0u64;
    let mut any = false;
    for (i, &t) in truth.labels.iter().enumerate() {
        let row = match t {
            l if l == CLASS_NORMAL_WMH => 0usize,
            l if l == CLASS_ABNORMAL_WMH => 1usize,
            _ => continue,
        };
        any = true;
        match decide(i) {
            Some(col) => matrix[row][col] += 1,
            None => unassigned += 1,
        }
    }
    if !any {
        return Err(MetricError::NoWmhVoxels);
    }
    Ok(WmhTypeMatrix { matrix, unassigned })
}
