//! On-disk formats: ODCR embedding files and plain-text label files.
//!
//! ODCR layout (all integers little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `b"ODCR"`                        |
//! | 4      | 1    | version, `0x01`                        |
//! | 5      | 1    | dtype, `0x00` = IEEE-754 binary32      |
//! | 6      | 4    | rows (u32)                             |
//! | 10     | 4    | cols (u32)                             |
//! | 14     | 4·rows·cols | row-major payload               |

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::Result;
use crate::eval::LabelVector;
use crate::linalg::Matrix;

pub const MAGIC: [u8; 4] = *b"ODCR";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0x00;
pub const HEADER_LEN: usize = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic at byte 0: expected \"ODCR\", found {found:02x?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported version {found:#04x} at byte 4")]
    UnsupportedVersion { found: u8 },

    #[error("unsupported dtype {found:#04x} at byte 5")]
    UnsupportedDtype { found: u8 },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("trailing bytes: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: usize, actual: usize },

    #[error("non-finite value at byte {offset} (row {row}, col {col})")]
    NonFinite { offset: usize, row: usize, col: usize },

    #[error("empty matrix: {rows} rows, {cols} cols")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("value {value} at row {row}, col {col} does not fit in f32")]
    OutOfRange { value: f64, row: usize, col: usize },

    #[error("matrix has {rows}x{cols} entries, beyond the u32 header fields")]
    TooLarge { rows: usize, cols: usize },

    #[error("label line {line}: {content:?} is not a non-negative integer")]
    BadLabel { line: usize, content: String },

    #[error("label file is empty")]
    EmptyLabels,
}

impl FormatError {
    pub fn kind(&self) -> &'static str {
        match self {
            FormatError::BadMagic { .. } => "bad-magic",
            FormatError::UnsupportedVersion { .. } => "unsupported-version",
            FormatError::UnsupportedDtype { .. } => "unsupported-dtype",
            FormatError::Truncated { .. } => "truncated",
            FormatError::TrailingBytes { .. } => "trailing-bytes",
            FormatError::NonFinite { .. } => "non-finite",
            FormatError::EmptyMatrix { .. } => "empty-matrix",
            FormatError::OutOfRange { .. } => "out-of-range",
            FormatError::TooLarge { .. } => "too-large",
            FormatError::BadLabel { .. } => "bad-label",
            FormatError::EmptyLabels => "empty-labels",
        }
    }
}

/// Serializes `m` as ODCR. Values are rounded to f32.
pub fn encode_embeddings(m: &Matrix) -> std::result::Result<Vec<u8>, FormatError> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(FormatError::EmptyMatrix { rows, cols });
    }
    let (r32, c32) = match (u32::try_from(rows), u32::try_from(cols)) {
        (Ok(r), Ok(c)) => (r, c),
        _ => return Err(FormatError::TooLarge { rows, cols }),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * rows * cols);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.extend_from_slice(&r32.to_le_bytes());
    out.extend_from_slice(&c32.to_le_bytes());
    for (i, &v) in m.as_slice().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(FormatError::OutOfRange {
                value: v,
                row: i / cols,
                col: i % cols,
            });
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

/// Parses an ODCR buffer. Every f32 is widened exactly to f64.
pub fn decode_embeddings(bytes: &[u8]) -> std::result::Result<Matrix, FormatError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        if bytes.len() < 4 && MAGIC.starts_with(bytes) {
            return Err(FormatError::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        return Err(FormatError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(FormatError::UnsupportedVersion { found: bytes[4] });
    }
    if bytes[5] != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype { found: bytes[5] });
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(6), word(10));
    if rows == 0 || cols == 0 {
        return Err(FormatError::EmptyMatrix { rows, cols });
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(FormatError::TooLarge { rows, cols })?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            expected,
            actual: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFinite {
                offset: HEADER_LEN + 4 * i,
                row: i / cols,
                col: i % cols,
            });
        }
        data.push(v as f64);
    }
    Ok(Matrix::from_parts(rows, cols, data))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    Ok(decode_embeddings(&bytes)?)
}

pub fn write_embeddings(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let bytes = encode_embeddings(m)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// One non-negative integer per line. A single trailing newline (and `\r\n`
/// line endings) is accepted; blank lines elsewhere are errors.
pub fn parse_labels(text: &str) -> std::result::Result<LabelVector, FormatError> {
    if text.is_empty() {
        return Err(FormatError::EmptyLabels);
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut labels = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let value = line
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|_| !line.trim().starts_with('+'));
        match value {
            Some(v) => labels.push(v),
            None => {
                return Err(FormatError::BadLabel {
                    line: i + 1,
                    content: line.to_string(),
                })
            }
        }
    }
    Ok(LabelVector(labels))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let text = fs::read_to_string(path)?;
    Ok(parse_labels(&text)?)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}
