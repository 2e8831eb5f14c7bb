//! Deterministic ingestion and emission of slices, masks, paired composites,
//! case manifests, and model weights in bit-exact documented formats.
//!
//! Pixel formats are binary PGM (P5, 8/16-bit) and grayscale PNG. Spacing
//! and case identity live in the plain-text manifest, not in pixel files.

mod manifest;
mod pgm;
pub mod weights;

pub use manifest::{CaseManifest, SliceEntry};
pub use pgm::{read_pgm, write_pgm, PgmImage};
pub use weights::{TensorEntry, TensorFile};

use crate::types::{ClassMask, Slice, TypeError};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImgIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: format error: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("invalid image data: {0}")]
    Invalid(#[from] TypeError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },
}

/// Load a grayscale slice from a PGM (P5) or PNG file. Intensities are
/// preserved exactly as stored; spacing is left at protocol defaults (the
/// manifest loader overrides it).
pub fn load_slice(path: &Path) -> Result<Slice, ImgIoError> {
    let (samples, width, height) = load_gray(path)?;
    let pixels = samples.iter().map(|&s| s as f32).collect();
    Ok(Slice::new(pixels, height, width, stem(path), 0)?)
}

/// Load a four-class mask stored as raw labels in an 8-bit PGM or PNG.
pub fn load_mask(path: &Path) -> Result<ClassMask, ImgIoError> {
    let (samples, width, height) = load_gray(path)?;
    let labels: Vec<u8> = samples.iter().map(|&s| s.min(255) as u8).collect();
    Ok(ClassMask::new(labels, height, width, stem(path), 0)?)
}

/// Save a mask as an 8-bit PGM with raw label values {0,1,2,3}.
pub fn save_mask(mask: &ClassMask, path: &Path) -> Result<(), ImgIoError> {
    // Re-validate: masks constructed field-by-field could carry stray labels.
    let revalidated = ClassMask::new(
        mask.labels.clone(),
        mask.height,
        mask.width,
        mask.case_id.clone(),
        mask.slice_index,
    )?;
    write_pgm(
        path,
        &PgmImage {
            width: revalidated.width,
            height: revalidated.height,
            maxval: 255,
            samples: revalidated.labels.iter().map(|&l| l as u16).collect(),
        },
    )
}

/// Save a slice as a 16-bit PGM, rounding intensities to the nearest
/// integer and clamping to [0, 65535].
pub fn save_slice(slice: &Slice, path: &Path) -> Result<(), ImgIoError> {
    let samples = slice
        .pixels
        .iter()
        .map(|&v| v.round().clamp(0.0, 65535.0) as u16)
        .collect();
    write_pgm(
        path,
        &PgmImage {
            width: slice.width,
            height: slice.height,
            maxval: 65535,
            samples,
        },
    )
}

/// Save a normalized [0,1] image as a 16-bit PGM (scale [0,1] -> [0,65535]).
pub fn save_unit_image(
    img: &[f32],
    height: usize,
    width: usize,
    path: &Path,
) -> Result<(), ImgIoError> {
    if img.len() != height * width {
        return Err(ImgIoError::Dimension {
            expected: format!("{height}x{width}"),
            got: format!("{} pixels", img.len()),
        });
    }
    let samples = img
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    write_pgm(
        path,
        &PgmImage {
            width,
            height,
            maxval: 65535,
            samples,
        },
    )
}

/// Horizontally concatenate a 256x256 input and its 256x256 target into a
/// 256x512 composite (input left, target right), stored as 16-bit PGM after
/// scaling [0,1] -> [0,65535].
pub fn save_paired(
    input_img: &[f32],
    target_img: &[f32],
    side: usize,
    path: &Path,
) -> Result<(), ImgIoError> {
    let n = side * side;
    if input_img.len() != n || target_img.len() != n {
        return Err(ImgIoError::Dimension {
            expected: format!("two {side}x{side} halves"),
            got: format!("{} and {} pixels", input_img.len(), target_img.len()),
        });
    }
    let mut samples = Vec::with_capacity(2 * n);
    for y in 0..side {
        for half in [input_img, target_img] {
            samples.extend(
                half[y * side..(y + 1) * side]
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16),
            );
        }
    }
    write_pgm(
        path,
        &PgmImage {
            width: 2 * side,
            height: side,
            maxval: 65535,
            samples,
        },
    )
}

fn load_gray(path: &Path) -> Result<(Vec<u16>, usize, usize), ImgIoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => {
            let img = read_pgm(path)?;
            Ok((img.samples, img.width, img.height))
        }
        Some("png") => load_png_gray(path),
        other => Err(ImgIoError::Format {
            path: path.to_path_buf(),
            detail: format!("unsupported extension {other:?} (expected pgm or png)"),
        }),
    }
}

fn load_png_gray(path: &Path) -> Result<(Vec<u16>, usize, usize), ImgIoError> {
    let dynimg = image::open(path).map_err(|e| ImgIoError::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    use image::DynamicImage::*;
    match dynimg {
        ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            Ok((img.into_raw().iter().map(|&v| v as u16).collect(), w, h))
        }
        ImageLuma16(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            Ok((img.into_raw(), w, h))
        }
        other => Err(ImgIoError::Format {
            path: path.to_path_buf(),
            detail: format!(
                "multi-channel or unsupported PNG color type {:?}; expected single-channel grayscale",
                other.color()
            ),
        }),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn slice_identity_roundtrip_16bit() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("u.pgm");
        let s = Slice::new(vec![1000.0; 256 * 256], 256, 256, "c", 0).unwrap();
        save_slice(&s, &p).unwrap();
        let back = load_slice(&p).unwrap();
        assert_eq!(back.height, 256);
        assert_eq!(back.width, 256);
        assert!(back.pixels.iter().all(|&v| v == 1000.0));
        assert_eq!((back.spacing_x, back.spacing_y), (0.9, 0.9));
        assert_eq!(back.slice_thickness, 6.0);
    }

    #[test]
    fn mask_roundtrip_bit_exact() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let mut labels = vec![0u8; 16];
        labels[1] = 1;
        labels[2] = 2;
        labels[3] = 3;
        let m = ClassMask::new(labels, 4, 4, "m", 0).unwrap();
        save_mask(&m, &p).unwrap();
        let back = load_mask(&p).unwrap();
        assert_eq!(back.labels, m.labels);
    }

    #[test]
    fn save_mask_rejects_label_out_of_range() {
        let dir = tempdir().unwrap();
        let mut m = ClassMask::new(vec![0u8; 4], 2, 2, "m", 0).unwrap();
        m.labels[0] = 4;
        assert!(save_mask(&m, &dir.path().join("m.pgm")).is_err());
    }

    #[test]
    fn all_background_mask_payload_is_zero_bytes() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("z.pgm");
        let m = ClassMask::new(vec![0u8; 9], 3, 3, "m", 0).unwrap();
        save_mask(&m, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let payload = &bytes[bytes.len() - 9..];
        assert!(payload.iter().all(|&b| b == 0));
    }

    #[test]
    fn paired_composite_layout() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("pair.pgm");
        let input = vec![0.0f32; 256 * 256];
        let target = vec![1.0f32; 256 * 256];
        save_paired(&input, &target, 256, &p).unwrap();
        let img = read_pgm(&p).unwrap();
        assert_eq!((img.width, img.height), (512, 256));
        assert_eq!(img.samples[0], 0);
        assert_eq!(img.samples[256], 65535);
    }

    #[test]
    fn paired_rejects_dimension_mismatch() {
        let dir = tempdir().unwrap();
        let res = save_paired(
            &vec![0.0; 128 * 128],
            &vec![0.0; 256 * 256],
            256,
            &dir.path().join("x.pgm"),
        );
        assert!(matches!(res, Err(ImgIoError::Dimension { .. })));
    }

    #[test]
    fn multichannel_png_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([1, 2, 3]));
        img.save(&p).unwrap();
        let err = load_slice(&p).unwrap_err();
        assert!(err.to_string().contains("multi-channel"));
    }

    #[test]
    fn grayscale_png_loads() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img = image::GrayImage::from_pixel(3, 2, image::Luma([77]));
        img.save(&p).unwrap();
        let s = load_slice(&p).unwrap();
        assert_eq!((s.width, s.height), (3, 2));
        assert!(s.pixels.iter().all(|&v| v == 77.0));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_slice(Path::new("/nonexistent/x.pgm")),
            Err(ImgIoError::Io { .. })
        ));
    }
}
