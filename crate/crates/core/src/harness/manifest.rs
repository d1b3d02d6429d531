//! Run manifests: what produced a run directory and checksums of its files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use super::persist::{read_text, write_text, DATASET_FORMAT_VERSION, MODEL_FORMAT_VERSION};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_hash: String,
    pub crate_version: String,
    pub model_format: u64,
    pub dataset_format: u64,
    /// `"<repetition>/<stage>"` to the seed that stage used, in decimal
    /// (TOML integers stop at i64).
    pub seeds: BTreeMap<String, String>,
    /// Path relative to the run directory to its SHA-256.
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            model_format: MODEL_FORMAT_VERSION,
            dataset_format: DATASET_FORMAT_VERSION,
            seeds: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    /// Records the checksum of `rel` (relative to `dir`).
    pub fn add_file(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let path = dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        write_text(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        toml::from_str(&read_text(&path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Re-hashes every listed file under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (rel, want) in &self.files {
            let path = dir.join(rel);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let got = sha256_hex(&bytes);
            if &got != want {
                return Err(Error::Invariant(format!(
                    "checksum mismatch for {}: manifest {want}, file {got}",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "k\n1\n").unwrap();
        let mut m = RunManifest::new("h".into());
        m.add_file(dir.path(), "a.csv").unwrap();
        m.save(dir.path()).unwrap();
        let back = RunManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        back.verify(dir.path()).unwrap();
        std::fs::write(dir.path().join("a.csv"), "k\n2\n").unwrap();
        assert!(matches!(back.verify(dir.path()), Err(Error::Invariant(_))));
    }
}
