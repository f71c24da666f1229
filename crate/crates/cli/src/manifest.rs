use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// What a command is about to do, written before it runs.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    /// SHA-256 over the git blob hashes of every input, in order.
    pub input_hash: String,
}

/// Git's object hash layout (`blob <len>\0<bytes>`) with SHA-256.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: Option<&Path>,
        inputs: &[&Path],
        outputs: &[PathBuf],
        seed: u64,
    ) -> std::io::Result<Self> {
        let mut all: Vec<&Path> = config.into_iter().collect();
        all.extend_from_slice(inputs);
        let mut h = Sha256::new();
        for p in &all {
            let bytes = fs::read(p).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
            h.update(blob_hash(&bytes).as_bytes());
            h.update(b"\n");
        }
        let show = |p: &Path| p.display().to_string();
        Ok(Self {
            command: command.to_string(),
            config: config.map(show),
            inputs: inputs.iter().map(|p| show(p)).collect(),
            outputs: outputs.iter().map(|p| show(p)).collect(),
            seed,
            input_hash: hex(&h.finalize()),
        })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = toml::to_string(self).map_err(std::io::Error::other)?;
        fs::write(path, text)
    }
}
