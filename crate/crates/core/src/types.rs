//! Core domain types shared across the pipeline.

use thiserror::Error;

/// Default in-plane pixel spacing in millimeters.
pub const DEFAULT_SPACING: (f64, f64) = (0.9, 0.9);
/// Default slice thickness in millimeters.
pub const DEFAULT_THICKNESS: f64 = 6.0;

/// Class ids of the four-class label space.
pub const CLASS_BACKGROUND: u8 = 0;
pub const CLASS_VENTRICLE: u8 = 1;
pub const CLASS_NORMAL_WMH: u8 = 2;
pub const CLASS_ABNORMAL_WMH: u8 = 3;
pub const NUM_CLASSES: usize = 4;

/// Human-readable class names, indexed by class id.
pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["background", "ventricle", "normal_wmh", "abnormal_wmh"];

#[derive(Debug, Error)]
pub enum TypeError {
    #[error("empty geometry: height and width must be positive (got {height}x{width})")]
    EmptyGeometry { height: usize, width: usize },
    #[error("pixel buffer length {len} does not match {height}x{width}")]
    LengthMismatch {
        len: usize,
        height: usize,
        width: usize,
    },
    #[error("spacing values must be positive (got {0}, {1})")]
    BadSpacing(f64, f64),
    #[error("invalid class label {label} at pixel {index} (valid labels are 0..=3)")]
    BadLabel { label: u8, index: usize },
}

/// One 2D grayscale image with physical voxel spacing; the pipeline's unit
/// of work. Intensities are dimensionless and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub pixels: Vec<f32>,
    pub height: usize,
    pub width: usize,
    /// Millimeters per pixel along x (columns) and y (rows).
    pub spacing_x: f64,
    pub spacing_y: f64,
    /// Millimeters between adjacent slices.
    pub slice_thickness: f64,
    pub case_id: String,
    pub slice_index: usize,
}

impl Slice {
    pub fn new(
        pixels: Vec<f32>,
        height: usize,
        width: usize,
        case_id: impl Into<String>,
        slice_index: usize,
    ) -> Result<Self, TypeError> {
        check_geometry(pixels.len(), height, width)?;
        Ok(Self {
            pixels,
            height,
            width,
            spacing_x: DEFAULT_SPACING.0,
            spacing_y: DEFAULT_SPACING.1,
            slice_thickness: DEFAULT_THICKNESS,
            case_id: case_id.into(),
            slice_index,
        })
    }

    pub fn with_spacing(mut self, sx: f64, sy: f64, thickness: f64) -> Result<Self, TypeError> {
        if sx <= 0.0 || sy <= 0.0 || thickness <= 0.0 {
            return Err(TypeError::BadSpacing(sx, sy));
        }
        self.spacing_x = sx;
        self.spacing_y = sy;
        self.slice_thickness = thickness;
        Ok(self)
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// Per-pixel label map over {background, ventricle, normal WMH, abnormal WMH}.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMask {
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub slice_thickness: f64,
    pub case_id: String,
    pub slice_index: usize,
}

impl ClassMask {
    pub fn new(
        labels: Vec<u8>,
        height: usize,
        width: usize,
        case_id: impl Into<String>,
        slice_index: usize,
    ) -> Result<Self, TypeError> {
        check_geometry(labels.len(), height, width)?;
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= NUM_CLASSES)
        {
            return Err(TypeError::BadLabel { label, index });
        }
        Ok(Self {
            labels,
            height,
            width,
            spacing_x: DEFAULT_SPACING.0,
            spacing_y: DEFAULT_SPACING.1,
            slice_thickness: DEFAULT_THICKNESS,
            case_id: case_id.into(),
            slice_index,
        })
    }

    pub fn with_spacing(mut self, sx: f64, sy: f64, thickness: f64) -> Result<Self, TypeError> {
        if sx <= 0.0 || sy <= 0.0 || thickness <= 0.0 {
            return Err(TypeError::BadSpacing(sx, sy));
        }
        self.spacing_x = sx;
        self.spacing_y = sy;
        self.slice_thickness = thickness;
        Ok(self)
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Boolean mask of pixels carrying `class_id`.
    pub fn class_mask(&self, class_id: u8) -> Vec<bool> {
        self.labels.iter().map(|&l| l == class_id).collect()
    }
}

fn check_geometry(len: usize, height: usize, width: usize) -> Result<(), TypeError> {
    if height == 0 || width == 0 {
        return Err(TypeError::EmptyGeometry { height, width });
    }
    if len != height * width {
        return Err(TypeError::LengthMismatch { len, height, width });
    }
    Ok(())
}
