//! File formats and run configuration.
//!
//! Binary formats are little-endian and start with a 4-byte magic and a u32
//! version (currently 1):
//!
//! | format | payload after `magic, version` |
//! |--------|--------------------------------|
//! | `MVHM` heat-map stack | `u32 k, u32 width, u32 height, u8 plane, 3 reserved bytes, f32[k·height·width], f64[6] affine` |
//! | `MVPP` pose prior | `u32 K, u32 M, f64[3K] mean, f64[M] eigenvalues, f64[3K·M] components (column-major)` |
//! | `MVDF` depth frame | `u32 width, u32 height, f32[width·height] depth (mm)` |
//!
//! Text formats (joints, view metadata, OBB, configuration) write floats in
//! shortest round-trip form, so decimal round trips are exact.

mod binary;
mod config;
mod text;

pub use binary::{
    heatmap_file_name, read_depth_frame, read_depth_frame_file, read_mvhm, read_mvhm_file, read_mvpp, read_mvpp_file,
    write_mvdf, write_mvdf_file, write_mvhm, write_mvhm_file, write_mvpp, write_mvpp_file, DepthAdapter,
};
pub use config::{ConfigValue, RunConfig, CONFIG_KEYS};
pub use text::{
    load_joints_file, read_joints, read_obb, read_obb_file, read_view_files, save_joints_file, write_joints, write_obb,
    write_obb_file, write_view_files,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("file truncated: needed {needed} more bytes at offset {offset}")]
    TruncatedFile { offset: usize, needed: usize },
    #[error("adapter mismatch: {0}")]
    AdapterMismatch(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("declared {declared} frames but found {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("invalid content: {0}")]
    Invalid(String),
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse { line, message: message.into() }
    }
}

/// Shortest round-trip decimal form of a float.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Non-empty, non-comment `key = value` lines with 1-based line numbers.
pub(crate) fn key_values(text: &str) -> Result<Vec<(usize, String, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| FormatError::parse(i + 1, format!("expected `key = value`, got `{line}`")))?;
        out.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_floats(line: usize, value: &str, expected: usize) -> Result<Vec<f64>, FormatError> {
    let values = value
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| FormatError::parse(line, format!("`{t}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(FormatError::parse(line, format!("expected {expected} numbers, got {}", values.len())));
    }
    Ok(values)
}
