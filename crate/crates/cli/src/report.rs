//! Report plumbing shared by every command. Nothing time- or path-dependent
//! goes into a report, so reruns with the same seed are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Digest of one file a command consumed.
#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub file: String,
    pub sha256: String,
}

/// Leading block of every report: enough to rerun the command.
#[derive(Debug, Serialize)]
pub struct Header<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a C,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, B: Serialize> {
    #[serde(flatten)]
    pub header: Header<'a, C>,
    #[serde(flatten)]
    pub body: B,
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::input(path, e))
}

pub fn digest(role: &'static str, path: &Path) -> CliResult<InputDigest> {
    let bytes = read_bytes(path)?;
    let file = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(InputDigest { role, file, sha256: sha256_hex(&bytes) })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a JSON config, rejecting unknown keys (the config types deny them).
pub fn load_config<T: DeserializeOwned>(path: Option<&Path>, default: T) -> CliResult<T> {
    match path {
        None => Ok(default),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::input(p, format!("invalid config: {e}")))
        }
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    write_text(path, &(text + "\n"))
}

/// Output location helper.
pub struct Out(pub PathBuf);

impl Out {
    pub fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
