//! Provenance headers and atomic output.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What went into a run: the resolved configuration and the hashes of
/// every file read.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: &'static str,
    pub config: Value,
    pub inputs: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            config: Value::Null,
            inputs: Vec::new(),
        }
    }

    /// Read a file, remembering its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(bytes)
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.config.to_string().as_bytes())
    }

    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("casimir {VERSION}"),
            format!("command: {}", self.command),
            format!("config_sha256: {}", self.config_hash()),
            format!("config: {}", self.config),
        ];
        for (path, hash) in &self.inputs {
            lines.push(format!("input {path} sha256: {hash}"));
        }
        lines
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tool": "casimir",
            "version": VERSION,
            "command": self.command,
            "config_sha256": self.config_hash(),
            "config": self.config,
            "inputs": self.inputs.iter().map(|(p, h)| json!({"path": p, "sha256": h})).collect::<Vec<_>>(),
        })
    }
}

/// Destination of a command's main artifact.
#[derive(Debug, Clone)]
pub struct Sink(pub Option<PathBuf>);

impl Sink {
    /// Write through a temporary file in the target directory and rename
    /// it into place, or print to stdout.
    pub fn write(&self, bytes: &[u8]) -> Result<()> {
        match &self.0 {
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
            }
            Some(path) => {
                let dir = match path.parent() {
                    Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                    _ => PathBuf::from("."),
                };
                let mut tmp = tempfile::NamedTempFile::new_in(&dir)
                    .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
                tmp.write_all(bytes)?;
                tmp.flush()?;
                tmp.persist(path)
                    .with_context(|| format!("cannot write {}", path.display()))?;
                log::info!("wrote {}", path.display());
            }
        }
        Ok(())
    }

    pub fn write_json(&self, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(text.as_bytes())
    }
}
