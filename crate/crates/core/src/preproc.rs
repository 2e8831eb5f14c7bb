//! Raw slice to normalized, brain-scaled network input: denoising, brain
//! extraction via moment ellipse, per-slice intensity normalization, and the
//! recorded affine fit into the 256x256 frame.

use crate::binmorph;
use crate::types::{ClassMask, Slice};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocError {
    #[error("invalid preprocessing config: {0}")]
    BadConfig(String),
    #[error("no brain found: {0}")]
    NoBrain(String),
    #[error("normalization failed: i_max ({i_max}) <= i_min ({i_min})")]
    DegenerateNormalization { i_min: f64, i_max: f64 },
    #[error("empty brain mask")]
    EmptyBrainMask,
    #[error("geometry mismatch between slice and mask")]
    GeometryMismatch,
    #[error("affine transform is not invertible")]
    NonInvertible,
}

/// Foreground threshold selection for brain extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMethod {
    /// Otsu's method on the intensity histogram.
    Otsu,
    /// Fixed fraction of the slice maximum.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocConfig {
    pub median_kernel: usize,
    pub gaussian_sigma: f64,
    pub brain_threshold_method: ThresholdMethod,
    pub min_component_area: usize,
    pub target_size: usize,
    pub fill_margin: f64,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            median_kernel: 3,
            gaussian_sigma: 1.0,
            brain_threshold_method: ThresholdMethod::Otsu,
            min_component_area: 64,
            target_size: 256,
            fill_margin: 0.02,
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<(), PreprocError> {
        if self.median_kernel == 0 || self.median_kernel % 2 == 0 {
            return Err(PreprocError::BadConfig(format!(
                "median_kernel must be odd and >= 1, got {}",
                self.median_kernel
            )));
        }
        if self.gaussian_sigma <= 0.0 {
            return Err(PreprocError::BadConfig("gaussian_sigma must be > 0".into()));
        }
        if !(0.0..0.5).contains(&self.fill_margin) {
            return Err(PreprocError::BadConfig(
                "fill_margin must be in [0, 0.5)".into(),
            ));
        }
        if self.target_size == 0 {
            return Err(PreprocError::BadConfig("target_size must be > 0".into()));
        }
        Ok(())
    }
}

/// Binary brain mask with the geometry of its source slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrainMask {
    pub mask: Vec<bool>,
    pub height: usize,
    pub width: usize,
}

/// Per-slice normalization window (Eq. boundaries of the [0,1] mapping).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub i_min: f64,
    pub i_max: f64,
}

/// 2x3 affine matrix (scale + translation only) mapping source pixel
/// coordinates (x, y) to frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub m: [f64; 6], // [m00, m01, m02, m10, m11, m12]
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        }
    }

    pub fn scale_translate(sx: f64, sy: f64, tx: f64, ty: f64) -> Self {
        Self {
            m: [sx, 0.0, tx, 0.0, sy, ty],
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0] * x + self.m[1] * y + self.m[2],
            self.m[3] * x + self.m[4] * y + self.m[5],
        )
    }

    pub fn inverse(&self) -> Result<Self, PreprocError> {
        let det = self.m[0] * self.m[4] - self.m[1] * self.m[3];
        if det == 0.0 || !det.is_finite() {
            return Err(PreprocError::NonInvertible);
        }
        let (a, b, c, d, e, f) = (
            self.m[0], self.m[1], self.m[2], self.m[3], self.m[4], self.m[5],
        );
        Ok(Self {
            m: [
                e / det,
                -b / det,
                (b * f - c * e) / det,
                -d / det,
                a / det,
                (c * d - a * f) / det,
            ],
        })
    }
}

/// Median filter (replicate border) followed by Gaussian blur with kernel
/// radius ceil(3*sigma) (replicate border). Geometry unchanged.
pub fn denoise(slice: &Slice, cfg: &PreprocConfig) -> Result<Slice, PreprocError> {
    cfg.validate()?;
    let med = median_filter(&slice.pixels, slice.height, slice.width, cfg.median_kernel);
    let blurred = gaussian_blur(&med, slice.height, slice.width, cfg.gaussian_sigma);
    let mut out = slice.clone();
    out.pixels = blurred;
    Ok(out)
}

pub fn median_filter(img: &[f32], height: usize, width: usize, kernel: usize) -> Vec<f32> {
    let r = (kernel / 2) as i64;
    let mut out = vec![0.0f32; img.len()];
    let mut window = Vec::with_capacity(kernel * kernel);
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    let ny = (y + dy).clamp(0, height as i64 - 1) as usize;
                    let nx = (x + dx).clamp(0, width as i64 - 1) as usize;
                    window.push(img[ny * width + nx]);
                }
            }
            window.sort_by(|a, b| a.total_cmp(b));
            out[y as usize * width + x as usize] = window[window.len() / 2];
        }
    }
    out
}

pub fn gaussian_blur(img: &[f32], height: usize, width: usize, sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    // Separable passes, replicate border.
    let mut tmp = vec![0.0f32; img.len()];
    for y in 0..height {
        for x in 0..width as i64 {
            let mut acc = 0.0f64;
            for (ki, &k) in kernel.iter().enumerate() {
                let nx = (x + ki as i64 - radius).clamp(0, width as i64 - 1) as usize;
                acc += k * img[y * width + nx] as f64;
            }
            tmp[y * width + x as usize] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; img.len()];
    for y in 0..height as i64 {
        for x in 0..width {
            let mut acc = 0.0f64;
            for (ki, &k) in kernel.iter().enumerate() {
                let ny = (y + ki as i64 - radius).clamp(0, height as i64 - 1) as usize;
                acc += k * tmp[ny * width + x] as f64;
            }
            out[y as usize * width + x] = acc as f32;
        }
    }
    out
}

/// Otsu's threshold over a 256-bin histogram of the value range. Returns a
/// value such that `v > threshold` selects foreground.
pub fn otsu_threshold(pixels: &[f32]) -> f64 {
    let lo = pixels.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
    let hi = pixels.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    if !(hi > lo) {
        return lo;
    }
    const BINS: usize = 256;
    let mut hist = [0u64; BINS];
    let scale = (BINS as f64 - 1.0) / (hi - lo);
    for &p in pixels {
        let b = ((p as f64 - lo) * scale).round() as usize;
        hist[b.min(BINS - 1)] += 1;
    }
    let total: u64 = pixels.len() as u64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let (mut best_t, mut best_var) = (0usize, -1.0f64);
    for t in 0..BINS - 1 {
        w0 += hist[t];
        if w0 == 0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0 {
            break;
        }
        sum0 += t as f64 * hist[t] as f64;
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    lo + best_t as f64 / scale
}

fn foreground_threshold(pixels: &[f32], method: ThresholdMethod) -> f64 {
    match method {
        ThresholdMethod::Otsu => otsu_threshold(pixels),
        ThresholdMethod::Fixed(fraction) => {
            fraction * pixels.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64
        }
    }
}

/// Brain extraction: threshold, despeckle, moment-ellipse approximation,
/// then refinement against the largest foreground region. The result is a
/// single 8-connected component.
pub fn extract_brain(slice: &Slice, cfg: &PreprocConfig) -> Result<BrainMask, PreprocError> {
    cfg.validate()?;
    let (h, w) = (slice.height, slice.width);
    let thr = foreground_threshold(&slice.pixels, cfg.brain_threshold_method);
    let fg: Vec<bool> = slice.pixels.iter().map(|&p| p as f64 > thr).collect();
    let fg = binmorph::remove_small_components(&fg, h, w, cfg.min_component_area);
    let mo = binmorph::moments(&fg, h, w)
        .ok_or_else(|| PreprocError::NoBrain("no foreground above threshold".into()))?;

    // Moment ellipse: orientation from the second-moment eigendecomposition,
    // semi-axes 2*sqrt(eigenvalue) (full support of a uniform ellipse).
    let theta = 0.5 * (2.0 * mo.mu11).atan2(mo.mu20 - mo.mu02);
    let common = (mo.mu20 + mo.mu02) / 2.0;
    let diff = ((mo.mu20 - mo.mu02) / 2.0).hypot(mo.mu11);
    let semi_a = 2.0 * (common + diff).max(0.0).sqrt();
    let semi_b = 2.0 * (common - diff).max(0.0).sqrt();
    let ellipse = binmorph::rasterize_ellipse(h, w, mo.cx, mo.cy, semi_a, semi_b, theta);

    // Refine: intersect with the filled largest foreground region.
    let largest = binmorph::largest_component(&fg, h, w);
    let filled = binmorph::fill_holes(&largest, h, w);
    let refined: Vec<bool> = ellipse
        .iter()
        .zip(filled.iter())
        .map(|(&e, &f)| e && f)
        .collect();
    let result = binmorph::largest_component(&refined, h, w);
    if result.iter().any(|&v| v) {
        Ok(BrainMask {
            mask: result,
            height: h,
            width: w,
        })
    } else {
        Err(PreprocError::NoBrain(
            "ellipse and foreground do not intersect".into(),
        ))
    }
}

/// Per-slice normalization window: i_min is the mean of background-proper
/// pixels (outside the brain, below threshold); i_max is the 99th-percentile
/// intensity of peripheral structures (outside the brain, above threshold),
/// falling back to the whole-slice 99th percentile when that set is empty.
pub fn compute_norm_params(
    slice: &Slice,
    brain: &BrainMask,
    cfg: &PreprocConfig,
) -> Result<NormalizationParams, PreprocError> {
    if slice.height != brain.height || slice.width != brain.width {
        return Err(PreprocError::GeometryMismatch);
    }
    let thr = foreground_threshold(&slice.pixels, cfg.brain_threshold_method);
    let mut background = Vec::new();
    let mut peripheral = Vec::new();
    for (i, &p) in slice.pixels.iter().enumerate() {
        if !brain.mask[i] {
            if (p as f64) > thr {
                peripheral.push(p);
            } else {
                background.push(p);
            }
        }
    }
    let i_min = if background.is_empty() {
        slice.pixels.iter().cloned().fold(f32::INFINITY, f32::min) as f64
    } else {
        background.iter().map(|&v| v as f64).sum::<f64>() / background.len() as f64
    };
    let i_max = if peripheral.is_empty() {
        percentile_nearest_rank(&slice.pixels, 0.99)
    } else {
        percentile_nearest_rank(&peripheral, 0.99)
    };
    if i_max <= i_min {
        return Err(PreprocError::DegenerateNormalization { i_min, i_max });
    }
    Ok(NormalizationParams { i_min, i_max })
}

fn percentile_nearest_rank(values: &[f32], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted: Vec<f32> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1] as f64
}

/// Map each pixel by (I - i_min) / (i_max - i_min), clamped to [0,1].
pub fn normalize(slice: &Slice, params: &NormalizationParams) -> Slice {
    let range = params.i_max - params.i_min;
    let mut out = slice.clone();
    out.pixels = slice
        .pixels
        .iter()
        .map(|&p| (((p as f64 - params.i_min) / range).clamp(0.0, 1.0)) as f32)
        .collect();
    out
}

/// Aspect-preserving scale + translation of the brain bounding box into the
/// central (1 - 2*fill_margin) region of the target frame, with bilinear
/// resampling. Returns the frame image and the source->frame transform.
pub fn fit_to_frame(
    slice: &Slice,
    brain: &BrainMask,
    cfg: &PreprocConfig,
) -> Result<(Vec<f32>, AffineTransform), PreprocError> {
    cfg.validate()?;
    if slice.height != brain.height || slice.width != brain.width {
        return Err(PreprocError::GeometryMismatch);
    }
    let t = frame_transform(brain, cfg)?;
    let img = warp_bilinear(
        &slice.pixels,
        slice.height,
        slice.width,
        &t,
        cfg.target_size,
        cfg.target_size,
    )?;
    Ok((img, t))
}

/// The affine fit used by `fit_to_frame`, derivable from the mask alone.
pub fn frame_transform(
    brain: &BrainMask,
    cfg: &PreprocConfig,
) -> Result<AffineTransform, PreprocError> {
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for y in 0..brain.height {
        for x in 0..brain.width {
            if brain.mask[y * brain.width + x] {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(PreprocError::EmptyBrainMask);
    }
    let bbox_w = (x1 - x0 + 1) as f64;
    let bbox_h = (y1 - y0 + 1) as f64;
    let target = cfg.target_size as f64 * (1.0 - 2.0 * cfg.fill_margin);
    let scale = target / bbox_w.max(bbox_h);
    let frame_center = (cfg.target_size as f64 - 1.0) / 2.0;
    let (bcx, bcy) = ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0);
    Ok(AffineTransform::scale_translate(
        scale,
        scale,
        frame_center - scale * bcx,
        frame_center - scale * bcy,
    ))
}

/// Resample `img` under `t` (source -> output coordinates) into an output
/// of the given size. Bilinear interpolation, out-of-source pixels -> 0.
pub fn warp_bilinear(
    img: &[f32],
    height: usize,
    width: usize,
    t: &AffineTransform,
    out_height: usize,
    out_width: usize,
) -> Result<Vec<f32>, PreprocError> {
    let inv = t.inverse()?;
    let mut out = vec![0.0f32; out_height * out_width];
    for oy in 0..out_height {
        for ox in 0..out_width {
            let (sx, sy) = inv.apply(ox as f64, oy as f64);
            out[oy * out_width + ox] = bilinear_sample(img, height, width, sx, sy);
        }
    }
    Ok(out)
}

/// Nearest-neighbor warp for categorical labels; out-of-source pixels -> 0.
pub fn warp_nearest(
    labels: &[u8],
    height: usize,
    width: usize,
    t: &AffineTransform,
    out_height: usize,
    out_width: usize,
) -> Result<Vec<u8>, PreprocError> {
    let inv = t.inverse()?;
    let mut out = vec![0u8; out_height * out_width];
    for oy in 0..out_height {
        for ox in 0..out_width {
            let (sx, sy) = inv.apply(ox as f64, oy as f64);
            let (nx, ny) = (sx.round(), sy.round());
            if nx >= 0.0 && ny >= 0.0 && (nx as usize) < width && (ny as usize) < height {
                out[oy * out_width + ox] = labels[ny as usize * width + nx as usize];
            }
        }
    }
    Ok(out)
}

pub fn bilinear_sample(img: &[f32], height: usize, width: usize, x: f64, y: f64) -> f32 {
    if x < -1.0 || y < -1.0 || x > width as f64 || y > height as f64 {
        return 0.0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let sample = |yy: f64, xx: f64| -> f64 {
        if xx < 0.0 || yy < 0.0 || xx >= width as f64 || yy >= height as f64 {
            0.0
        } else {
            img[yy as usize * width + xx as usize] as f64
        }
    };
    let v = sample(y0, x0) * (1.0 - fx) * (1.0 - fy)
        + sample(y0, x0 + 1.0) * fx * (1.0 - fy)
        + sample(y0 + 1.0, x0) * (1.0 - fx) * fy
        + sample(y0 + 1.0, x0 + 1.0) * fx * fy;
    v as f32
}

/// Anchor values of the four classes in the single-channel target encoding.
pub const CLASS_ANCHORS: [f32; 4] = [0.0, 0.25, 0.75, 1.0];

/// Encode a label mask into the single-channel [0,1] training target.
pub fn encode_target(mask: &ClassMask) -> Vec<f32> {
    mask.labels
        .iter()
        .map(|&l| CLASS_ANCHORS[l as usize])
        .collect()
}
