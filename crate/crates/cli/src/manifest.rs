//! Run manifests: what was run, with which config and seed, and the
//! checksum of every output written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Output path (relative to the output directory) → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub struct OutputSet {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(OutputSet {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path for a new output file; parent directories are created.
    pub fn path(&mut self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        self.written.push(p.clone());
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        Ok(p)
    }

    pub fn finish(self, command: &str, config: &str, config_sha256: &str, seed: u64) -> Result<PathBuf, CliError> {
        let mut outputs = BTreeMap::new();
        for p in &self.written {
            let bytes = std::fs::read(p).map_err(|e| io(p, e))?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().replace('\\', "/");
            outputs.insert(rel, hex::encode(Sha256::digest(&bytes)));
        }
        let m = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config: config.to_string(),
            config_sha256: config_sha256.to_string(),
            seed,
            outputs,
        };
        let name = format!("manifest-{}.json", command.replace(' ', "-"));
        let path = self.root.join(name);
        let mut json = serde_json::to_vec_pretty(&m).map_err(airmap_core::Error::from)?;
        json.push(b'\n');
        std::fs::write(&path, json).map_err(|e| io(&path, e))?;
        Ok(path)
    }
}

fn io(p: &Path, e: std::io::Error) -> CliError {
    CliError::Core(airmap_core::Error::Io {
        context: format!("writing {}", p.display()),
        source: e,
    })
}
