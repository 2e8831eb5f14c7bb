//! Run configuration: a flat set of documented key=value settings shared by
//! all subcommands. Values come from defaults, then an optional config file,
//! then command-line `--set key=value` overrides, in that order. Unknown
//! keys are rejected rather than silently ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::nn::{AdamConfig, LossWeights, TrainConfig};
use crate::phantom::PhantomConfig;
use crate::postproc::PostprocConfig;
use crate::preproc::{PreprocConfig, ThresholdMethod};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{key}': '{value}' ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// All tunables of the pipeline. Field names double as config keys.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $( $field: $default, )* }
            }
        }

        impl RunConfig {
            /// Apply one key=value assignment.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $( stringify!($field) => {
                        self.$field = value.parse::<$ty>().map_err(|e| ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            reason: e.to_string(),
                        })?;
                    } )*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// The fully resolved configuration as a key=value document,
            /// suitable for re-reading with `apply_text`.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $( let _ = writeln!(s, "{}={}", stringify!($field), self.$field); )*
                s
            }
        }
    };
}

run_config! {
    /// Random seed for phantom generation, weight init, and training order.
    seed: u64 = 17,
    /// Side length of the model frame; must be a power of two.
    image_size: usize = 256,

    /// Number of synthetic cases to generate.
    phantom_cases: usize = 20,
    /// Slices per synthetic case.
    phantom_slices: usize = 3,
    /// Additive Gaussian noise level of synthetic intensities.
    phantom_noise_sigma: f64 = 0.03,

    /// Median filter kernel (odd) used during denoising.
    median_kernel: usize = 3,
    /// Gaussian blur sigma used during denoising; 0 disables.
    gaussian_sigma: f64 = 1.0,
    /// Components smaller than this are dropped during brain extraction.
    min_component_area: usize = 64,
    /// Margin kept around the brain when fitting it into the frame.
    fill_margin: f64 = 0.02,

    /// Training epochs.
    epochs: usize = 50,
    /// Adam learning rate for both networks.
    learning_rate: f64 = 2e-4,
    /// Adam first-moment decay.
    beta1: f64 = 0.5,
    /// Adam second-moment decay.
    beta2: f64 = 0.999,
    /// Weight of the adversarial loss term.
    lambda_adv: f64 = 1.0,
    /// Weight of the L1 reconstruction loss term.
    lambda_l1: f64 = 100.0,
    /// Fraction of cases held out for checkpoint selection.
    holdout_fraction: f64 = 0.15,

    /// Temperature of the distance softmax over class anchors.
    softmax_temperature: f64 = 0.05,
    /// Decoded regions smaller than this are absorbed into background.
    min_region_area: usize = 3,
    /// Disk radius of the open/close smoothing step.
    smoothing_radius: usize = 1,

    /// Probability threshold separating the two lesion types in reports.
    wmh_prob_threshold: f64 = 0.3,
    /// Iterations per stage in the bench subcommand.
    bench_iterations: usize = 5,
}

impl RunConfig {
    /// Parse a key=value document and apply every assignment. Blank lines
    /// and lines starting with '#' are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.apply_text(&text)
    }

    /// Apply `--set key=value` style overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: o.clone(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |key: &str, value: String, reason: &str| {
            Err(ConfigError::BadValue {
                key: key.into(),
                value,
                reason: reason.into(),
            })
        };
        if !self.image_size.is_power_of_two() || self.image_size < 16 {
            return err(
                "image_size",
                self.image_size.to_string(),
                "must be a power of two, at least 16",
            );
        }
        if self.median_kernel % 2 == 0 {
            return err("median_kernel", self.median_kernel.to_string(), "must be odd");
        }
        if !(0.0..0.5).contains(&self.holdout_fraction) {
            return err(
                "holdout_fraction",
                self.holdout_fraction.to_string(),
                "must be in [0, 0.5)",
            );
        }
        if self.softmax_temperature <= 0.0 {
            return err(
                "softmax_temperature",
                self.softmax_temperature.to_string(),
                "must be positive",
            );
        }
        if !(0.0..1.0).contains(&self.wmh_prob_threshold) {
            return err(
                "wmh_prob_threshold",
                self.wmh_prob_threshold.to_string(),
                "must be in [0, 1)",
            );
        }
        self.phantom().validate().map_err(|reason| ConfigError::BadValue {
            key: "phantom_*".into(),
            value: String::new(),
            reason,
        })?;
        Ok(())
    }

    pub fn phantom(&self) -> PhantomConfig {
        PhantomConfig {
            size: self.image_size,
            slices_per_case: self.phantom_slices,
            noise_sigma: self.phantom_noise_sigma,
            ..Default::default()
        }
    }

    pub fn preproc(&self) -> PreprocConfig {
        PreprocConfig {
            median_kernel: self.median_kernel,
            gaussian_sigma: self.gaussian_sigma,
            brain_threshold_method: ThresholdMethod::Otsu,
            min_component_area: self.min_component_area,
            target_size: self.image_size,
            fill_margin: self.fill_margin,
        }
    }

    pub fn postproc(&self) -> PostprocConfig {
        PostprocConfig {
            softmax_temperature: self.softmax_temperature,
            min_region_area: self.min_region_area,
            smoothing_radius: self.smoothing_radius,
            ..Default::default()
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            image_size: self.image_size,
            seed: self.seed,
            holdout_fraction: self.holdout_fraction,
            weights: LossWeights {
                lambda_adv: self.lambda_adv,
                lambda_l1: self.lambda_l1,
            },
            gen_opt: AdamConfig {
                lr: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: 1e-8,
            },
            disc_opt: AdamConfig {
                lr: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: 1e-8,
            },
        }
    }
}
