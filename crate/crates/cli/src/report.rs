//! Report envelopes and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct MapSource {
    pub path: PathBuf,
    pub sha256: String,
}

impl MapSource {
    pub fn read(path: &Path) -> Result<(Self, String), CliError> {
        let bytes =
            fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Input(format!("{}: not UTF-8", path.display())))?;
        let source = Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        };
        Ok((source, text))
    }
}

/// Every JSON report: what ran, on which input, with which settings.
#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub map: &'a MapSource,
    pub config: &'a C,
    pub passed: bool,
    pub result: R,
}

impl<C: Serialize, R: Serialize> Report<'_, C, R> {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| io(e.error))?;
    Ok(target)
}
