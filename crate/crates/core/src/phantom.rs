//! Synthetic test-image generator: elliptical head phantoms with a bright
//! skull rim, two mirrored dark ventricle lobes, diffuse bright change
//! confined to a periventricular band, and focal bright lesions near the
//! lobe tips. Masks are exact because they are rasterized before noise is
//! added to the intensities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binmorph::{dilate, rasterize_ellipse};
use crate::types::{
    ClassMask, Slice, CLASS_ABNORMAL_WMH, CLASS_NORMAL_WMH, CLASS_VENTRICLE,
};

#[derive(Debug, Clone)]
pub struct PhantomConfig {
    pub size: usize,
    pub slices_per_case: usize,
    /// Standard deviation of the additive Gaussian intensity noise.
    pub noise_sigma: f64,
    /// Tissue intensities; must satisfy ventricle < tissue < lesion <= skull.
    pub intensity_ventricle: f64,
    pub intensity_tissue: f64,
    pub intensity_lesion: f64,
    pub intensity_skull: f64,
    /// Width of the periventricular band that confines diffuse change, as a
    /// fraction of the image side (at least 2 px after rounding).
    pub band_frac: f64,
    /// Inclusive range of focal lesion counts per slice.
    pub lesions_min: usize,
    pub lesions_max: usize,
    /// Inclusive radius range of focal lesions, as fractions of the image
    /// side so geometry is resolution-independent.
    pub lesion_radius_min: f64,
    pub lesion_radius_max: f64,
    pub spacing: (f64, f64),
    pub slice_thickness: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            size: 256,
            slices_per_case: 3,
            noise_sigma: 0.03,
            intensity_ventricle: 0.08,
            intensity_tissue: 0.45,
            intensity_lesion: 0.78,
            intensity_skull: 0.88,
            band_radius: 4,
            lesions_min: 2,
            lesions_max: 10,
            lesion_radius_min: 2.0,
            lesion_radius_max: 8.0,
            spacing: (0.9, 0.9),
            slice_thickness: 6.0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.size < 32 {
            return Err("size must be at least 32".into());
        }
        if !(self.intensity_ventricle < self.intensity_tissue
            && self.intensity_tissue < self.intensity_lesion
            && self.intensity_lesion <= self.intensity_skull)
        {
            return Err("intensities must satisfy ventricle < tissue < lesion <= skull".into());
        }
        if self.lesions_min > self.lesions_max || self.lesion_radius_min > self.lesion_radius_max {
            return Err("lesion count/radius ranges must be non-empty".into());
        }
        if self.noise_sigma < 0.0 {
            return Err("noise_sigma must be non-negative".into());
        }
        if self.slices_per_case == 0 {
            return Err("slices_per_case must be positive".into());
        }
        Ok(())
    }
}

pub struct PhantomCase {
    pub case_id: String,
    pub slices: Vec<(Slice, ClassMask)>,
}

/// The noise-free intensity image, the label mask, and the brain footprint
/// of one slice.
struct SliceGeometry {
    intensity: Vec<f64>,
    labels: Vec<u8>,
}

fn build_slice(cfg: &PhantomConfig, rng: &mut ChaCha8Rng) -> SliceGeometry {
    let n = cfg.size;
    let nf = n as f64;
    let cx = nf / 2.0 + rng.gen_range(-0.02..0.02) * nf;
    let cy = nf / 2.0 + rng.gen_range(-0.02..0.02) * nf;
    let semi_a = nf * rng.gen_range(0.30..0.36);
    let semi_b = nf * rng.gen_range(0.36..0.42);
    let theta = rng.gen_range(-0.08..0.08);

    let brain = rasterize_ellipse(n, n, cx, cy, semi_a, semi_b, theta);
    let skull_out = rasterize_ellipse(n, n, cx, cy, semi_a + 4.0, semi_b + 4.0, theta);

    // Two mirrored ventricle lobes flanking the midline, elongated vertically.
    let lobe_dx = nf * rng.gen_range(0.05..0.08);
    let lobe_a = nf * rng.gen_range(0.018..0.028);
    let lobe_b = nf * rng.gen_range(0.08..0.12);
    let lobe_dy = nf * rng.gen_range(-0.02..0.02);
    let tilt = rng.gen_range(0.0..0.15);
    let left = rasterize_ellipse(n, n, cx - lobe_dx, cy + lobe_dy, lobe_a, lobe_b, -tilt);
    let right = rasterize_ellipse(n, n, cx + lobe_dx, cy + lobe_dy, lobe_a, lobe_b, tilt);
    let mut ventricle: Vec<bool> = left
        .iter()
        .zip(&right)
        .zip(&brain)
        .map(|((&l, &r), &b)| (l || r) && b)
        .collect();
    // Keep the lobes away from the skull.
    for (v, &b) in ventricle.iter_mut().zip(&brain) {
        *v = *v && b;
    }

    // Diffuse change lives only in a thin band hugging the ventricles.
    let band_full = dilate(&ventricle, n, n, cfg.band_radius);
    let band: Vec<bool> = band_full
        .iter()
        .zip(&ventricle)
        .zip(&brain)
        .map(|((&d, &v), &b)| d && !v && b)
        .collect();
    let mut normal = vec![false; n * n];
    // A handful of diffuse patches: random band pixels grown by a small disk,
    // clipped back to the band.
    let band_idx: Vec<usize> = (0..n * n).filter(|&i| band[i]).collect();
    if !band_idx.is_empty() {
        let patches = rng.gen_range(3..=7);
        let mut seeds = vec![false; n * n];
        for _ in 0..patches {
            seeds[band_idx[rng.gen_range(0..band_idx.len())]] = true;
        }
        let grown = dilate(&seeds, n, n, rng.gen_range(2..=4));
        for i in 0..n * n {
            normal[i] = grown[i] && band[i];
        }
    }

    // Focal lesions clustered near the lobe tips.
    let mut abnormal = vec![false; n * n];
    let n_lesions = rng.gen_range(cfg.lesions_min..=cfg.lesions_max);
    let tips = [
        (cx - lobe_dx, cy + lobe_dy - lobe_b),
        (cx - lobe_dx, cy + lobe_dy + lobe_b),
        (cx + lobe_dx, cy + lobe_dy - lobe_b),
        (cx + lobe_dx, cy + lobe_dy + lobe_b),
    ];
    for _ in 0..n_lesions {
        let (tx, ty) = tips[rng.gen_range(0..tips.len())];
        let r = rng.gen_range(cfg.lesion_radius_min..=cfg.lesion_radius_max);
        let jitter = nf * 0.05;
        let lx = tx + rng.gen_range(-jitter..jitter);
        let ly = ty + rng.gen_range(-jitter..jitter);
        let blob = rasterize_ellipse(n, n, lx, ly, r, r, 0.0);
        for i in 0..n * n {
            abnormal[i] |= blob[i] && brain[i];
        }
    }

    // Compose labels with precedence ventricle > focal > diffuse.
    let mut labels = vec![0u8; n * n];
    for i in 0..n * n {
        if ventricle[i] {
            labels[i] = CLASS_VENTRICLE;
        } else if abnormal[i] {
            labels[i] = CLASS_ABNORMAL_WMH;
        } else if normal[i] {
            labels[i] = CLASS_NORMAL_WMH;
        }
    }

    let mut intensity = vec![0.0f64; n * n];
    for i in 0..n * n {
        intensity[i] = if skull_out[i] && !brain[i] {
            cfg.intensity_skull
        } else if !brain[i] {
            0.0
        } else {
            match labels[i] {
                CLASS_VENTRICLE => cfg.intensity_ventricle,
                CLASS_NORMAL_WMH | CLASS_ABNORMAL_WMH => cfg.intensity_lesion,
                _ => cfg.intensity_tissue,
            }
        };
    }
    SliceGeometry { intensity, labels }
}

/// Generate one case. Same (config, case_id, seed) always yields the same
/// pixels and masks.
pub fn generate_case(cfg: &PhantomConfig, case_id: &str, seed: u64) -> PhantomCase {
    // Derive the stream from both the base seed and the case id so cases are
    // decorrelated but individually reproducible.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in case_id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100000001b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
    let noise = Normal::new(0.0f64, cfg.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let n = cfg.size;
    let mut slices = Vec::with_capacity(cfg.slices_per_case);
    for si in 0..cfg.slices_per_case {
        let geom = build_slice(cfg, &mut rng);
        let pixels: Vec<f32> = geom
            .intensity
            .iter()
            .map(|&v| {
                let noisy = if cfg.noise_sigma > 0.0 {
                    v + noise.sample(&mut rng)
                } else {
                    v
                };
                noisy.max(0.0) as f32
            })
            .collect();
        let slice = Slice::new(pixels, n, n, case_id, si)
            .expect("generated geometry is valid")
            .with_spacing(cfg.spacing.0, cfg.spacing.1, cfg.slice_thickness)
            .expect("config spacing is valid");
        let mask = ClassMask::new(geom.labels, n, n, case_id, si)
            .expect("generated labels are valid")
            .with_spacing(cfg.spacing.0, cfg.spacing.1, cfg.slice_thickness)
            .expect("config spacing is valid");
        slices.push((slice, mask));
    }
    PhantomCase {
        case_id: case_id.to_string(),
        slices,
    }
}

/// Generate `n_cases` cases named case000, case001, ... and split them at
/// case granularity: the first 70% train, the rest test.
pub fn generate_dataset(
    cfg: &PhantomConfig,
    n_cases: usize,
    seed: u64,
) -> (Vec<PhantomCase>, Vec<PhantomCase>) {
    let cases: Vec<PhantomCase> = (0..n_cases)
        .map(|i| generate_case(cfg, &format!("case{i:03}"), seed))
        .collect();
    let n_train = ((n_cases as f64) * 0.7).round() as usize;
    let n_train = n_train.clamp(usize::from(n_cases > 1), n_cases);
    let mut it = cases.into_iter();
    let train: Vec<PhantomCase> = it.by_ref().take(n_train).collect();
    let test: Vec<PhantomCase> = it.collect();
    (train, test)
}
