//! Binary PGM ("P5") reader/writer. 8-bit for maxval <= 255, otherwise
//! 16-bit with big-endian sample order per the PGM specification.

use super::ImgIoError;
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Samples in row-major order, widened to u16.
    pub samples: Vec<u16>,
}

pub fn read_pgm(path: &Path) -> Result<PgmImage, ImgIoError> {
    let bytes = fs::read(path).map_err(|source| ImgIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pgm(&bytes).map_err(|msg| ImgIoError::Format {
        path: path.to_path_buf(),
        detail: msg,
    })
}

fn parse_pgm(bytes: &[u8]) -> Result<PgmImage, String> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
    if magic != b"P5" {
        return Err(format!(
            "unsupported magic {:?} (only binary P5 is supported)",
            String::from_utf8_lossy(&magic)
        ));
    }
    let width: usize = parse_int(next_token(bytes, &mut pos).ok_or("missing width")?)?;
    let height: usize = parse_int(next_token(bytes, &mut pos).ok_or("missing height")?)?;
    let maxval: u32 = parse_int(next_token(bytes, &mut pos).ok_or("missing maxval")?)? as u32;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range 1..=65535"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let n = width * height;
    let wide = maxval > 255;
    let needed = if wide { 2 * n } else { n };
    if bytes.len() < pos + needed {
        return Err(format!(
            "truncated payload: need {needed} bytes, found {}",
            bytes.len().saturating_sub(pos)
        ));
    }
    let payload = &bytes[pos..pos + needed];
    let samples = if wide {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        payload.iter().map(|&b| b as u16).collect()
    };
    Ok(PgmImage {
        width,
        height,
        maxval,
        samples,
    })
}

pub fn write_pgm(path: &Path, img: &PgmImage) -> Result<(), ImgIoError> {
    let n = img.width * img.height;
    debug_assert_eq!(img.samples.len(), n);
    let mut out = Vec::with_capacity(n * 2 + 32);
    write!(out, "P5\n{} {}\n{}\n", img.width, img.height, img.maxval).unwrap();
    if img.maxval > 255 {
        for &s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(img.samples.iter().map(|&s| s as u8));
    }
    fs::write(path, out).map_err(|source| ImgIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    // Skip whitespace and '#' comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(bytes[start..*pos].to_vec())
}

fn parse_int(tok: Vec<u8>) -> Result<usize, String> {
    std::str::from_utf8(&tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("invalid integer {:?}", String::from_utf8_lossy(&tok)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_8_and_16_bit() {
        let dir = tempdir().unwrap();
        for maxval in [255u32, 65535] {
            let img = PgmImage {
                width: 3,
                height: 2,
                maxval,
                samples: vec![0, 1, 2, 3, 4, (maxval as u16).min(250)],
            };
            let p = dir.path().join(format!("t{maxval}.pgm"));
            write_pgm(&p, &img).unwrap();
            assert_eq!(read_pgm(&p).unwrap(), img);
        }
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("trunc.pgm");
        std::fs::write(&p, b"P5\n4 4\n255\nabc").unwrap();
        let err = read_pgm(&p).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        std::fs::write(&p, b"P5\n# made by hand\n2 1\n255\nab").unwrap();
        let img = read_pgm(&p).unwrap();
        assert_eq!(img.samples, vec![b'a' as u16, b'b' as u16]);
    }
}
