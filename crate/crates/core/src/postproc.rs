//! Raw generator output back to native space and into a cleaned four-class
//! mask plus per-class probability maps.

use crate::binmorph;
use crate::preproc::{warp_bilinear, AffineTransform, PreprocError};
use crate::types::{ClassMask, TypeError, NUM_CLASSES};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("invalid postprocessing config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Transform(#[from] PreprocError),
    #[error(transparent)]
    Invalid(#[from] TypeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocConfig {
    /// Grayscale anchor of each class, strictly increasing.
    pub anchors: [f64; NUM_CLASSES],
    /// Softmax temperature of the distance-based class probabilities.
    pub softmax_temperature: f64,
    /// Components smaller than this are absorbed into background.
    pub min_region_area: usize,
    /// Radius of the open-then-close smoothing pass (0 disables it).
    pub smoothing_radius: usize,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            anchors: [0.0, 0.25, 0.75, 1.0],
            softmax_temperature: 0.05,
            min_region_area: 3,
            smoothing_radius: 1,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<(), PostprocError> {
        if self.anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PostprocError::BadConfig(
                "anchors must be strictly increasing".into(),
            ));
        }
        if self.softmax_temperature <= 0.0 {
            return Err(PostprocError::BadConfig(
                "softmax_temperature must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-class probability maps over the geometry of one slice. For every
/// pixel the four values sum to 1.
#[derive(Debug, Clone)]
pub struct ClassProbabilities {
    pub probs: [Vec<f64>; NUM_CLASSES],
    pub height: usize,
    pub width: usize,
}

impl ClassProbabilities {
    #[inline]
    pub fn at(&self, class_id: usize, y: usize, x: usize) -> f64 {
        self.probs[class_id][y * self.width + x]
    }
}

/// Inverse-warp the frame-space generator output back to native dimensions
/// with bilinear resampling; out-of-frame pixels become 0 (background
/// anchor).
pub fn to_native(
    gen_out: &[f32],
    frame_size: usize,
    t: &AffineTransform,
    native_height: usize,
    native_width: usize,
) -> Result<Vec<f32>, PostprocError> {
    let inv = t.inverse()?;
    Ok(warp_bilinear(
        gen_out,
        frame_size,
        frame_size,
        &inv,
        native_height,
        native_width,
    )?)
}

/// Distance-based softmax over the class anchors:
/// p_c(v) = exp(-|v - anchor_c| / tau) / sum_k exp(-|v - anchor_k| / tau).
pub fn decode_probabilities(
    img: &[f32],
    height: usize,
    width: usize,
    cfg: &PostprocConfig,
) -> Result<ClassProbabilities, PostprocError> {
    cfg.validate()?;
    let tau = cfg.softmax_temperature;
    let mut probs: [Vec<f64>; NUM_CLASSES] =
        std::array::from_fn(|_| Vec::with_capacity(img.len()));
    for &v in img {
        let v = v as f64;
        // Shift by the max exponent so tiny tau cannot underflow all terms.
        let exps: Vec<f64> = cfg
            .anchors
            .iter()
            .map(|&a| -(v - a).abs() / tau)
            .collect();
        let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = exps.iter().map(|&e| (e - m).exp()).collect();
        let sum: f64 = weights.iter().sum();
        for (c, w) in weights.iter().enumerate() {
            probs[c].push(w / sum);
        }
    }
    Ok(ClassProbabilities {
        probs,
        height,
        width,
    })
}

/// Hard assignment: nearest anchor per pixel (the argmax of
/// `decode_probabilities` for every temperature). Exact-distance ties break
/// to the lower class index.
pub fn decode_classes(
    img: &[f32],
    height: usize,
    width: usize,
    case_id: &str,
    slice_index: usize,
    cfg: &PostprocConfig,
) -> Result<ClassMask, PostprocError> {
    cfg.validate()?;
    let labels = img
        .iter()
        .map(|&v| {
            let v = v as f64;
            let mut best = 0usize;
            let mut best_d = (v - cfg.anchors[0]).abs();
            for (c, &a) in cfg.anchors.iter().enumerate().skip(1) {
                let d = (v - a).abs();
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best as u8
        })
        .collect();
    Ok(ClassMask::new(labels, height, width, case_id, slice_index)?)
}

/// Component filtering, hole filling, and open/close smoothing per
/// non-background class. Overlaps created by smoothing resolve with
/// precedence ventricle > abnormal WMH > normal WMH > background. The pass
/// is iterated to a fixed point, which makes the operation idempotent.
pub fn morphological_cleanup(mask: &ClassMask, cfg: &PostprocConfig) -> ClassMask {
    let mut current = mask.clone();
    for _ in 0..10 {
        let next = cleanup_pass(&current, cfg);
        if next.labels == current.labels {
            break;
        }
        current = next;
    }
    current
}

fn cleanup_pass(mask: &ClassMask, cfg: &PostprocConfig) -> ClassMask {
    let (h, w) = (mask.height, mask.width);
    let mut out = mask.clone();
    out.labels = vec![0u8; h * w];
    // Increasing precedence: normal WMH, abnormal WMH, ventricle.
    for &class_id in &[2u8, 3, 1] {
        let binary: Vec<bool> = mask.labels.iter().map(|&l| l == class_id).collect();
        if !binary.iter().any(|&v| v) {
            continue;
        }
        let mut cleaned = binmorph::remove_small_components(&binary, h, w, cfg.min_region_area);
        // Fill enclosed holes, but only absorb pixels that were background
        // or this class in the input; other classes keep their pixels.
        let filled = binmorph::fill_holes(&cleaned, h, w);
        for i in 0..cleaned.len() {
            if filled[i] && !cleaned[i] && (mask.labels[i] == 0 || mask.labels[i] == class_id) {
                cleaned[i] = true;
            }
        }
        if cfg.smoothing_radius > 0 {
            cleaned = binmorph::close(
                &binmorph::open(&cleaned, h, w, cfg.smoothing_radius),
                h,
                w,
                cfg.smoothing_radius,
            );
        }
        for (o, &c) in out.labels.iter_mut().zip(cleaned.iter()) {
            if c {
                *o = class_id;
            }
        }
    }
    out
}

/// The annulus obtained by dilating the ventricle mask and removing the
/// ventricle itself; the region in which normal WMH is defined.
pub fn periventricular_band(
    ventricle_mask: &[bool],
    height: usize,
    width: usize,
    dilation_radius: usize,
) -> Vec<bool> {
    binmorph::dilate(ventricle_mask, height, width, dilation_radius)
        .iter()
        .zip(ventricle_mask.iter())
        .map(|(&d, &v)| d && !v)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preproc::CLASS_ANCHORS;

    fn cfg() -> PostprocConfig {
        PostprocConfig::default()
    }

    #[test]
    fn probabilities_sum_to_one_and_anchor_dominates() {
        let img = vec![0.0f32, 0.25, 0.75, 1.0, 0.4, 0.61];
        let p = decode_probabilities(&img, 2, 3, &cfg()).unwrap();
        for i in 0..img.len() {
            let total: f64 = (0..4).map(|c| p.probs[c][i]).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
        // exactly at each anchor, that class strictly dominates
        for (i, expect) in [(0usize, 0usize), (1, 1), (2, 2), (3, 3)] {
            let best = (0..4).max_by(|&a, &b| p.probs[a][i].total_cmp(&p.probs[b][i])).unwrap();
            assert_eq!(best, expect);
        }
    }

    #[test]
    fn midpoint_between_adjacent_anchors_ties_exactly() {
        let p = decode_probabilities(&[0.5f32], 1, 1, &cfg()).unwrap();
        assert_eq!(p.probs[1][0], p.probs[2][0]);
        assert_eq!(p.probs[0][0], p.probs[3][0]);
        assert!(p.probs[1][0] > p.probs[0][0]);
    }

    #[test]
    fn tiny_temperature_approaches_one_hot() {
        let mut c = cfg();
        c.softmax_temperature = 1e-4;
        let p = decode_probabilities(&[0.26f32], 1, 1, &c).unwrap();
        assert!(p.probs[1][0] > 0.999);
    }

    #[test]
    fn decode_classes_nearest_anchor_and_tie_break() {
        let img = vec![0.5f32, 0.9, 0.1, 0.126];
        let m = decode_classes(&img, 2, 2, "t", 0, &cfg()).unwrap();
        // 0.5 ties classes 1/2 -> lower index 1; 0.9 -> 3; 0.1 -> 0 (0.1 < 0.15);
        // 0.126 -> 1 (distance 0.124 vs 0.126).
        assert_eq!(m.labels, vec![1, 3, 0, 1]);
    }

    #[test]
    fn encode_decode_roundtrip_all_classes() {
        let labels: Vec<u8> = (0..16).map(|i| (i % 4) as u8).collect();
        let m = ClassMask::new(labels, 4, 4, "t", 0).unwrap();
        let encoded: Vec<f32> = m.labels.iter().map(|&l| CLASS_ANCHORS[l as usize]).collect();
        let back = decode_classes(&encoded, 4, 4, "t", 0, &cfg()).unwrap();
        assert_eq!(back.labels, m.labels);
    }

    #[test]
    fn argmax_is_temperature_invariant() {
        let img: Vec<f32> = (0..101).map(|i| i as f32 / 100.0).collect();
        let mut reference = None;
        for tau in [1e-4, 0.05, 1.0] {
            let mut c = cfg();
            c.softmax_temperature = tau;
            let p = decode_probabilities(&img, 1, 101, &c).unwrap();
            let argmax: Vec<usize> = (0..img.len())
                .map(|i| {
                    // ties to lower index, matching decode_classes
                    let mut best = 0;
                    for k in 1..4 {
                        if p.probs[k][i] > p.probs[best][i] {
                            best = k;
                        }
                    }
                    best
                })
                .collect();
            let hard = decode_classes(&img, 1, 101, "t", 0, &c).unwrap();
            let hard_usize: Vec<usize> = hard.labels.iter().map(|&l| l as usize).collect();
            assert_eq!(argmax, hard_usize, "tau={tau}");
            match &reference {
                None => reference = Some(argmax),
                Some(r) => assert_eq!(r, &argmax, "tau={tau}"),
            }
        }
    }

    #[test]
    fn cleanup_removes_speck_and_fills_hole() {
        let (h, w) = (16, 16);
        let mut labels = vec![0u8; h * w];
        // one-pixel ventricle speck
        labels[2 * w + 2] = 1;
        // ventricle ring with a 3x3 interior hole
        for y in 6..13 {
            for x in 6..13 {
                labels[y * w + x] = 1;
            }
        }
        for y in 8..11 {
            for x in 8..11 {
                labels[y * w + x] = 0;
            }
        }
        let m = ClassMask::new(labels, h, w, "t", 0).unwrap();
        let cleaned = morphological_cleanup(&m, &cfg());
        assert_eq!(cleaned.at(2, 2), 0, "speck should be removed");
        assert_eq!(cleaned.at(9, 9), 1, "hole should be filled as ventricle");
    }

    #[test]
    fn cleanup_leaves_clean_regions_unchanged_and_is_idempotent() {
        let (h, w) = (32, 32);
        let mut labels = vec![0u8; h * w];
        for y in 4..16 {
            for x in 4..16 {
                labels[y * w + x] = 1;
            }
        }
        for y in 20..28 {
            for x in 20..28 {
                labels[y * w + x] = 3;
            }
        }
        let m = ClassMask::new(labels.clone(), h, w, "t", 0).unwrap();
        let once = morphological_cleanup(&m, &cfg());
        assert_eq!(once.labels, labels);
        let twice = morphological_cleanup(&once, &cfg());
        assert_eq!(once.labels, twice.labels);
    }

    #[test]
    fn cleanup_never_invents_classes() {
        let (h, w) = (24, 24);
        let mut labels = vec![0u8; h * w];
        for y in 8..16 {
            for x in 8..16 {
                labels[y * w + x] = 2;
            }
        }
        let m = ClassMask::new(labels, h, w, "t", 0).unwrap();
        let cleaned = morphological_cleanup(&m, &cfg());
        assert!(cleaned.labels.iter().all(|&l| l == 0 || l == 2));
    }

    #[test]
    fn band_of_single_pixel_radius_one_is_eight_ring() {
        let mut v = vec![false; 25];
        v[12] = true;
        let band = periventricular_band(&v, 5, 5, 1);
        assert_eq!(band.iter().filter(|&&b| b).count(), 8);
        assert!(!band[12]);
    }

    #[test]
    fn band_is_disjoint_from_ventricle_and_empty_for_empty() {
        let empty = vec![false; 64];
        assert!(periventricular_band(&empty, 8, 8, 3).iter().all(|&b| !b));
        let mut v = vec![false; 64];
        for i in [9usize, 10, 17, 18, 27] {
            v[i] = true;
        }
        let band = periventricular_band(&v, 8, 8, 2);
        assert!(band.iter().zip(v.iter()).all(|(&b, &m)| !(b && m)));
    }

    #[test]
    fn to_native_identity_and_constant() {
        let img: Vec<f32> = (0..256 * 256).map(|i| (i % 97) as f32 / 96.0).collect();
        let out = to_native(&img, 256, &AffineTransform::identity(), 256, 256).unwrap();
        assert_eq!(img, out);
    }
}
