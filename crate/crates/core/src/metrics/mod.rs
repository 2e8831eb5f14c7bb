//! Quantitative evaluation: detection, overlap, boundary, curve, and
//! confusion-matrix metrics, plus distribution export.

mod curves;
mod lesion;
mod report;

pub use curves::{pr_curve, roc_curve, Curve, PrPoint, RocPoint};
pub use lesion::{
    lesion_confusion, normal_vs_abnormal_matrix, normal_vs_abnormal_matrix_from_probs,
    LesionConfusion, WmhTypeMatrix,
};
pub use report::{aggregate, rows_to_csv, AggregateReport, CaseClassRow, MetricStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("geometry mismatch: prediction {pred:?} vs truth {truth:?}")]
    GeometryMismatch {
        pred: (usize, usize, usize),
        truth: (usize, usize, usize),
    },
    #[error("undefined boundary distance: {0} mask is empty")]
    UndefinedBoundary(&'static str),
    #[error("curve undefined: {0}")]
    UndefinedCurve(&'static str),
    #[error("no WMH voxels in truth")]
    NoWmhVoxels,
    #[error("empty input")]
    EmptyInput,
}

/// Voxelwise confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// A prediction/truth pair of binary masks over the same grid. `depth` is 1
/// for per-slice 2D evaluation; stacked slices give 3D with anisotropic
/// spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub data: Vec<bool>,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    /// Physical voxel size in millimeters along x, y, z.
    pub spacing: [f64; 3],
}

impl BinaryMask {
    pub fn new_2d(data: Vec<bool>, height: usize, width: usize, sx: f64, sy: f64) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            data,
            depth: 1,
            height,
            width,
            spacing: [sx, sy, 1.0],
        }
    }

    pub fn new_3d(
        data: Vec<bool>,
        depth: usize,
        height: usize,
        width: usize,
        spacing: [f64; 3],
    ) -> Self {
        debug_assert_eq!(data.len(), depth * height * width);
        Self {
            data,
            depth,
            height,
            width,
            spacing,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    fn count(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }
}

fn check_geometry(pred: &BinaryMask, truth: &BinaryMask) -> Result<(), MetricError> {
    if pred.dims() != truth.dims() {
        return Err(MetricError::GeometryMismatch {
            pred: pred.dims(),
            truth: truth.dims(),
        });
    }
    Ok(())
}

/// Voxelwise confusion counts of a prediction against truth.
pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts, MetricError> {
    check_geometry(pred, truth)?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data.iter().zip(truth.data.iter()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// TP/(TP+FP). With an empty denominator: 1.0 when the truth is also empty
/// (nothing to find, nothing claimed), else 0.0.
pub fn precision(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fp == 0 {
        return if c.fn_ == 0 { 1.0 } else { 0.0 };
    }
    c.tp as f64 / (c.tp + c.fp) as f64
}

/// TP/(TP+FN). With an empty denominator: 1.0 when the prediction is also
/// empty, else 0.0.
pub fn recall(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fn_ == 0 {
        return if c.fp == 0 { 1.0 } else { 0.0 };
    }
    c.tp as f64 / (c.tp + c.fn_) as f64
}

/// Dice similarity coefficient 2|A∩B| / (|A| + |B|); 1.0 when both masks
/// are empty.
pub fn dice(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64, MetricError> {
    check_geometry(pred, truth)?;
    let a = pred.count();
    let b = truth.count();
    if a + b == 0 {
        return Ok(1.0);
    }
    let inter = pred
        .data
        .iter()
        .zip(truth.data.iter())
        .filter(|(&p, &t)| p && t)
        .count() as u64;
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Jaccard index |A∩B| / |A∪B|; 1.0 when both masks are empty.
pub fn jaccard(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64, MetricError> {
    check_geometry(pred, truth)?;
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&p, &t) in pred.data.iter().zip(truth.data.iter()) {
        if p && t {
            inter += 1;
        }
        if p || t {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// 95th-percentile symmetric Hausdorff distance in millimeters.
///
/// Boundary voxels are foreground voxels with at least one background
/// face-neighbor (voxels outside the grid count as background). Directed
/// distances use the exact Euclidean distance transform with anisotropic
/// spacing; the percentile is nearest-rank over the sorted directed
/// distances.
pub fn hd95(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64, MetricError> {
    check_geometry(pred, truth)?;
    if !pred.data.iter().any(|&v| v) {
        return Err(MetricError::UndefinedBoundary("prediction"));
    }
    if !truth.data.iter().any(|&v| v) {
        return Err(MetricError::UndefinedBoundary("truth"));
    }
    let ba = boundary(pred);
    let bb = boundary(truth);
    let h_ab = directed_h95(&ba, &bb, pred);
    let h_ba = directed_h95(&bb, &ba, pred);
    Ok(h_ab.max(h_ba))
}

fn directed_h95(from: &[bool], to: &[bool], geom: &BinaryMask) -> f64 {
    let sq = edt_squared(to, geom);
    let mut dists: Vec<f64> = from
        .iter()
        .zip(sq.iter())
        .filter(|(&f, _)| f)
        .map(|(_, &d2)| d2.sqrt())
        .collect();
    dists.sort_by(|a, b| a.total_cmp(b));
    let rank = ((0.95 * dists.len() as f64).ceil() as usize).clamp(1, dists.len());
    dists[rank - 1]
}

/// Foreground voxels with a background face-neighbor (4-neighborhood in 2D,
/// 6-neighborhood in 3D).
pub fn boundary(mask: &BinaryMask) -> Vec<bool> {
    let (d, h, w) = mask.dims();
    let idx = |z: usize, y: usize, x: usize| (z * h + y) * w + x;
    let mut out = vec![false; mask.data.len()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !mask.data[idx(z, y, x)] {
                    continue;
                }
                let mut is_boundary = x == 0
                    || x == w - 1
                    || y == 0
                    || y == h - 1
                    || !mask.data[idx(z, y, x - 1)]
                    || !mask.data[idx(z, y, x + 1)]
                    || !mask.data[idx(z, y - 1, x)]
                    || !mask.data[idx(z, y + 1, x)];
                if d > 1 && !is_boundary {
                    is_boundary = z == 0
                        || z == d - 1
                        || !mask.data[idx(z - 1, y, x)]
                        || !mask.data[idx(z + 1, y, x)];
                }
                out[idx(z, y, x)] = is_boundary;
            }
        }
    }
    out
}

/// Exact squared Euclidean distance (mm^2) to the nearest set voxel,
/// separable lower-envelope transform with per-axis spacing.
fn edt_squared(set: &[bool], geom: &BinaryMask) -> Vec<f64> {
    let (d, h, w) = geom.dims();
    const INF: f64 = 1e30;
    let mut dist: Vec<f64> = set.iter().map(|&s| if s { 0.0 } else { INF }).collect();
    let idx = |z: usize, y: usize, x: usize| (z * h + y) * w + x;

    // x axis
    let mut line = vec![0.0; w.max(h).max(d)];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                line[x] = dist[idx(z, y, x)];
            }
            let t = dt_1d(&line[..w], geom.spacing[0]);
            for x in 0..w {
                dist[idx(z, y, x)] = t[x];
            }
        }
    }
    // y axis
    for z in 0..d {
        for x in 0..w {
            for y in 0..h {
                line[y] = dist[idx(z, y, x)];
            }
            let t = dt_1d(&line[..h], geom.spacing[1]);
            for y in 0..h {
                dist[idx(z, y, x)] = t[y];
            }
        }
    }
    // z axis
    if d > 1 {
        for y in 0..h {
            for x in 0..w {
                for z in 0..d {
                    line[z] = dist[idx(z, y, x)];
                }
                let t = dt_1d(&line[..d], geom.spacing[2]);
                for z in 0..d {
                    dist[idx(z, y, x)] = t[z];
                }
            }
        }
    }
    dist
}

/// One-dimensional squared-distance lower envelope with grid step `s`:
/// out[i] = min_j (f[j] + ((i-j)*s)^2).
fn dt_1d(f: &[f64], s: f64) -> Vec<f64> {
    let n = f.len();
    let s2 = s * s;
    let mut v = vec![0usize; n]; // parabola sites
    let mut z = vec![0.0f64; n + 1]; // boundaries between parabolas
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            // intersection of parabolas rooted at p and q
            let sx = (f[q] - f[p] + s2 * ((q * q) as f64 - (p * p) as f64))
                / (2.0 * s2 * (q as f64 - p as f64));
            if sx <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = sx;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    let mut out = vec![0.0f64; n];
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = (q as f64 - p as f64) * s;
        out[q] = dq * dq + f[p];
    }
    out
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute-force oracles, independent of the production code paths.
    use super::BinaryMask;

    /// O(n^2) all-pairs directed nearest-boundary distances + nearest-rank
    /// 95th percentile, symmetric max.
    pub fn hd95_bruteforce(pred: &BinaryMask, truth: &BinaryMask) -> f64 {
        let ba = points(&super::boundary(pred), pred);
        let bb = points(&super::boundary(truth), truth);
        let d_ab = directed(&ba, &bb);
        let d_ba = directed(&bb, &ba);
        d_ab.max(d_ba)
    }

    fn points(boundary: &[bool], geom: &BinaryMask) -> Vec<[f64; 3]> {
        let (_, h, w) = (geom.depth, geom.height, geom.width);
        boundary
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| {
                let z = i / (h * w);
                let y = (i / w) % h;
                let x = i % w;
                [
                    x as f64 * geom.spacing[0],
                    y as f64 * geom.spacing[1],
                    z as f64 * geom.spacing[2],
                ]
            })
            .collect()
    }

    fn directed(from: &[[f64; 3]], to: &[[f64; 3]]) -> f64 {
        let mut dists: Vec<f64> = from
            .iter()
            .map(|a| {
                to.iter()
                    .map(|b| {
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        dists.sort_by(|a, b| a.total_cmp(b));
        let rank = ((0.95 * dists.len() as f64).ceil() as usize).clamp(1, dists.len());
        dists[rank - 1]
    }

    /// Exhaustive per-voxel confusion enumeration.
    #[allow(dead_code)] // kept as a reference implementation alongside hd95_bruteforce
    pub fn confusion_bruteforce(pred: &BinaryMask, truth: &BinaryMask) -> (u64, u64, u64, u64) {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for i in 0..pred.data.len() {
            match (pred.data[i], truth.data[i]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        (tp, fp, fn_, tn)
    }
}
