//! CSV/JSON writers and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// `f64` serialized to JSON with [`sig17`]; non-finite values become
/// `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(sig17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

pub fn sig_vec(xs: &[f64]) -> Vec<Sig17> {
    xs.iter().copied().map(Sig17).collect()
}

/// Comma-separated, LF-terminated, header row first.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(CliError::io)?;
    for row in rows {
        w.write_record(row).map_err(CliError::io)?;
    }
    w.into_inner().map_err(|e| CliError::io(e.into_error()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(std::io::Error::other(e)))?;
    out.push(b'\n');
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one invocation: command, parameters, seed, tool version and
/// every emitted file with its digest.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub outputs: Vec<OutputFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            parameters,
            seed,
            outputs: Vec::new(),
            diagnostics: None,
        }
    }
}

/// Writes `bytes` to `path` and records it in `manifest` under its file
/// name.
pub fn emit(path: &Path, bytes: &[u8], manifest: &mut RunManifest) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io_at(path, e))?;
    manifest.outputs.push(OutputFile {
        file: file_name(path),
        sha256: sha256_hex(bytes),
        bytes: bytes.len(),
    });
    Ok(())
}

/// Destination for single-file commands: the file itself plus a
/// `<file>.manifest.json` sidecar, or stdout without a manifest.
pub fn deliver(out: Option<&Path>, bytes: &[u8], mut manifest: RunManifest) -> Result<(), CliError> {
    match out {
        Some(path) => {
            emit(path, bytes, &mut manifest)?;
            let sidecar = sidecar_path(path);
            let doc = json_bytes(&manifest)?;
            fs::write(&sidecar, doc).map_err(|e| CliError::io_at(&sidecar, e))
        }
        None => std::io::stdout().write_all(bytes).map_err(CliError::io),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
