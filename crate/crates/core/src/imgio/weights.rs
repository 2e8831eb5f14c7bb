//! Versioned binary container for named f32 parameter tensors: a text
//! header listing each tensor's name and shape, then raw little-endian
//! 32-bit floats in header order.

use super::ImgIoError;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MAGIC: &str = "WMHSEG-WEIGHTS v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub entries: Vec<TensorEntry>,
}

impl TensorFile {
    pub fn save(&self, path: &Path) -> Result<(), ImgIoError> {
        let mut out = Vec::new();
        writeln!(out, "{MAGIC}").unwrap();
        for e in &self.entries {
            debug_assert_eq!(e.data.len(), e.shape.iter().product::<usize>());
            let dims: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
            writeln!(out, "tensor {} {}", e.name, dims.join(" ")).unwrap();
        }
        writeln!(out, "data").unwrap();
        for e in &self.entries {
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|source| ImgIoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ImgIoError> {
        let bytes = fs::read(path).map_err(|source| ImgIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&bytes).map_err(|detail| ImgIoError::Format {
            path: path.to_path_buf(),
            detail,
        })
    }

    fn parse(bytes: &[u8]) -> Result<Self, String> {
        let mut pos = 0usize;
        let mut entries: Vec<(String, Vec<usize>)> = Vec::new();
        let mut first = true;
        loop {
            let nl = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or("unterminated header")?;
            let line = std::str::from_utf8(&bytes[pos..pos + nl])
                .map_err(|_| "non-UTF8 header line".to_string())?;
            pos += nl + 1;
            if first {
                if line != MAGIC {
                    return Err(format!("bad magic line {line:?}, expected {MAGIC:?}"));
                }
                first = false;
                continue;
            }
            if line == "data" {
                break;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("tensor") => {}
                other => return Err(format!("unexpected header token {other:?}")),
            }
            let name = parts.next().ok_or("tensor line missing name")?.to_string();
            let shape: Vec<usize> = parts
                .map(|p| p.parse().map_err(|_| format!("bad dimension {p:?}")))
                .collect::<Result<_, _>>()?;
            if shape.is_empty() {
                return Err(format!("tensor {name} has no dimensions"));
            }
            entries.push((name, shape));
        }
        let total: usize = entries
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        let payload = &bytes[pos..];
        if payload.len() != total * 4 {
            return Err(format!(
                "payload length {} does not match header total {} floats (truncated or corrupt)",
                payload.len(),
                total
            ));
        }
        let mut floats = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut out = Vec::with_capacity(entries.len());
        for (name, shape) in entries {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = floats.by_ref().take(n).collect();
            out.push(TensorEntry { name, shape, data });
        }
        Ok(TensorFile { entries: out })
    }
}
