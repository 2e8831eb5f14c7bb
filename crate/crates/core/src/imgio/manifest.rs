//! Case manifests: a plain-text file naming the slices of one case, with
//! optional mask paths and per-case voxel spacing. One `key=value` entry per
//! line; `slice` entries carry `index image_path [mask_path]`.

use super::{load_mask, load_slice, ImgIoError};
use crate::types::{ClassMask, Slice, DEFAULT_SPACING, DEFAULT_THICKNESS};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct SliceEntry {
    pub slice_index: usize,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseManifest {
    pub case_id: String,
    pub spacing: (f64, f64, f64),
    /// Entries sorted by `slice_index`, strictly increasing.
    pub slices: Vec<SliceEntry>,
    /// Directory all relative paths resolve against.
    pub base_dir: PathBuf,
}

impl CaseManifest {
    pub fn new(case_id: impl Into<String>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            case_id: case_id.into(),
            spacing: (DEFAULT_SPACING.0, DEFAULT_SPACING.1, DEFAULT_THICKNESS),
            slices: Vec::new(),
            base_dir: base_dir.into(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ImgIoError> {
        let mut out = String::new();
        out.push_str(&format!("case_id={}\n", self.case_id));
        out.push_str(&format!(
            "spacing={} {} {}\n",
            self.spacing.0, self.spacing.1, self.spacing.2
        ));
        for s in &self.slices {
            out.push_str(&format!("slice={} {}", s.slice_index, s.image.display()));
            if let Some(m) = &s.mask {
                out.push_str(&format!(" {}", m.display()));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| ImgIoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ImgIoError> {
        let text = fs::read_to_string(path).map_err(|source| ImgIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let fail = |detail: String| ImgIoError::Format {
            path: path.to_path_buf(),
            detail,
        };
        let mut m = CaseManifest::new("", base_dir);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("line {}: expected key=value", lineno + 1)))?;
            match key.trim() {
                "case_id" => m.case_id = value.trim().to_string(),
                "spacing" => {
                    let parts: Vec<f64> = value
                        .split_whitespace()
                        .map(|p| p.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| fail(format!("line {}: bad spacing triple", lineno + 1)))?;
                    if parts.len() != 3 || parts.iter().any(|&v| v <= 0.0) {
                        return Err(fail(format!(
                            "line {}: spacing needs 3 positive values",
                            lineno + 1
                        )));
                    }
                    m.spacing = (parts[0], parts[1], parts[2]);
                }
                "slice" => {
                    let mut parts = value.split_whitespace();
                    let idx: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| fail(format!("line {}: bad slice index", lineno + 1)))?;
                    let image = parts
                        .next()
                        .ok_or_else(|| fail(format!("line {}: missing image path", lineno + 1)))?;
                    m.slices.push(SliceEntry {
                        slice_index: idx,
                        image: PathBuf::from(image),
                        mask: parts.next().map(PathBuf::from),
                    });
                }
                other => return Err(fail(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        if m.case_id.is_empty() {
            return Err(fail("missing case_id".into()));
        }
        // Slices sort by index regardless of file order; duplicates are invalid.
        m.slices.sort_by_key(|s| s.slice_index);
        if m.slices.windows(2).any(|w| w[0].slice_index == w[1].slice_index) {
            return Err(fail("duplicate slice_index".into()));
        }
        Ok(m)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Load all slices (and masks, where present) of the case, applying the
    /// manifest's spacing and identity fields.
    pub fn load_case(&self) -> Result<Vec<(Slice, Option<ClassMask>)>, ImgIoError> {
        let mut out = Vec::with_capacity(self.slices.len());
        for e in &self.slices {
            let mut slice = load_slice(&self.resolve(&e.image))?;
            slice.case_id = self.case_id.clone();
            slice.slice_index = e.slice_index;
            slice.spacing_x = self.spacing.0;
            slice.spacing_y = self.spacing.1;
            slice.slice_thickness = self.spacing.2;
            let mask = match &e.mask {
                Some(mp) => {
                    let mut mask = load_mask(&self.resolve(mp))?;
                    mask.case_id = self.case_id.clone();
                    mask.slice_index = e.slice_index;
                    mask.spacing_x = self.spacing.0;
                    mask.spacing_y = self.spacing.1;
                    mask.slice_thickness = self.spacing.2;
                    Some(mask)
                }
                None => None,
            };
            out.push((slice, mask));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn load_sorts_by_slice_index() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("case.manifest");
        fs::write(
            &p,
            "case_id=c1\nspacing=0.9 0.9 6\nslice=2 b.pgm\nslice=0 a.pgm\nslice=1 c.pgm\n",
        )
        .unwrap();
        let m = CaseManifest::load(&p).unwrap();
        let idx: Vec<usize> = m.slices.iter().map(|s| s.slice_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_index_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("case.manifest");
        fs::write(&p, "case_id=c1\nslice=0 a.pgm\nslice=0 b.pgm\n").unwrap();
        assert!(CaseManifest::load(&p).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("case.manifest");
        fs::write(&p, "case_id=c1\nfoo=bar\n").unwrap();
        assert!(CaseManifest::load(&p).is_err());
    }
}
