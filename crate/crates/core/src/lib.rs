//! Four-class brain slice segmentation pipeline: ventricles, normal white
//! matter hyperintensities (WMH), and abnormal WMH against background.
//!
//! The crate covers the full path from raw grayscale slices to evaluated
//! segmentations:
//!
//! * [`imgio`] — PGM/PNG slice and mask I/O, case manifests, model weights
//! * [`preproc`] — denoising, brain extraction, intensity normalization and
//!   framing into the 256×256 network input space
//! * [`nn`] — from-scratch tensor math, the U-Net generator, the patch
//!   discriminator, Adam, and the alternating GAN training loop
//! * [`postproc`] — inverse spatial transform, anchor-based four-class
//!   decoding, morphological cleanup
//! * [`metrics`] — confusion counts, Dice/Jaccard, HD95, PR/ROC curves,
//!   lesion-level confusion and report aggregation
//! * [`phantom`] — seeded synthetic slices with exact ground truth
//! * [`cli`] — subcommand entry points shared by the binary and tests

pub mod binmorph;
pub mod cli;
pub mod config;
pub mod imgio;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod postproc;
pub mod preproc;
pub mod types;

pub use types::{ClassMask, Slice};
