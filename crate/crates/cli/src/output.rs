//! Write-once output directories named by a hash of the effective configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files are buffered in memory and written in one go, so a failed command leaves
/// nothing behind and a finished one is never touched again.
pub struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    version: &'a str,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    result: &'a BTreeMap<String, toml::Value>,
    config: toml::Value,
}

/// Hash of the command, the canonical config and the bytes of every input file.
pub fn config_hash(command: &str, canonical: &str, inputs: &[(String, Vec<u8>)]) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(canonical.as_bytes());
    for (name, bytes) in inputs {
        h.update([0]);
        h.update(name.as_bytes());
        h.update([0]);
        h.update(Sha256::digest(bytes));
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl Outputs {
    /// Fails if the target directory already exists.
    pub fn new(root: &Path, command: &str, hash: &str) -> Result<Self, CliError> {
        let dir = root.join(format!("{command}-{hash}"));
        if dir.exists() {
            return Err(CliError::Data(format!(
                "output directory {} already exists",
                dir.display()
            )));
        }
        Ok(Outputs {
            dir,
            files: BTreeMap::new(),
        })
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    /// Writes every file plus `manifest.toml` into a staging directory, then renames it.
    pub fn commit(
        mut self,
        command: &str,
        hash: &str,
        canonical: &str,
        inputs: &[(String, Vec<u8>)],
        result: &BTreeMap<String, toml::Value>,
    ) -> Result<PathBuf, CliError> {
        let entry = |path: &str, b: &[u8]| FileEntry {
            path: path.to_string(),
            sha256: sha256_hex(b),
            bytes: b.len(),
        };
        let manifest = Manifest {
            command,
            config_hash: hash,
            version: env!("CARGO_PKG_VERSION"),
            inputs: inputs.iter().map(|(p, b)| entry(p, b)).collect(),
            outputs: self.files.iter().map(|(p, b)| entry(p, b)).collect(),
            result,
            config: toml::from_str(canonical).map_err(|e| CliError::Internal(e.to_string()))?,
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        self.files.insert("manifest.toml".into(), text.into_bytes());

        let parent = self.dir.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let staging = parent.join(format!(
            ".{}.partial",
            self.dir.file_name().and_then(|n| n.to_str()).unwrap_or("out")
        ));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        for (name, bytes) in &self.files {
            let path = staging.join(name);
            if let Some(p) = path.parent() {
                fs::create_dir_all(p)?;
            }
            fs::write(path, bytes)?;
        }
        fs::rename(&staging, &self.dir)?;
        Ok(self.dir)
    }
}
