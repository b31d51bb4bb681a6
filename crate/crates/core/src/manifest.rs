//! Run manifests: what was run, on which bytes, with which seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_digest: String,
    /// SHA-256 of the input file bytes, empty when the command reads no input.
    pub input_digest: String,
    /// SHA-256 of the primary output bytes.
    pub output_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl RunManifest {
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        input_digest: String,
        seed: u64,
    ) -> Result<Self> {
        // serde_json writes struct fields in declaration order, so this is stable.
        let config_bytes = serde_json::to_vec(config)?;
        Ok(Self {
            command: command.to_string(),
            config_digest: sha256_hex(&config_bytes),
            input_digest,
            output_digest: String::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
        })
    }

    /// Sidecar path: `out.json` -> `out.json.manifest.json`.
    pub fn sidecar_path(output: &Path) -> std::path::PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        name.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_digest_is_stable() {
        #[derive(Serialize)]
        struct C {
            k: usize,
            seed: u64,
        }
        let a = RunManifest::new("fit", &C { k: 8, seed: 1 }, String::new(), 1).unwrap();
        let b = RunManifest::new("fit", &C { k: 8, seed: 1 }, String::new(), 1).unwrap();
        let c = RunManifest::new("fit", &C { k: 4, seed: 1 }, String::new(), 1).unwrap();
        assert_eq!(a.config_digest, b.config_digest);
        assert_ne!(a.config_digest, c.config_digest);
    }
}
