//! Run manifests: what a command read, what it wrote, with which settings,
//! and how it ended.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config_file: Option<String>,
    pub settings: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Outputs holding wall-clock measurements. Their bytes differ between
    /// otherwise identical runs, so they are listed without a digest.
    pub logs: Vec<String>,
    pub counters: BTreeMap<String, Value>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
    pub error: Option<ErrorRecord>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            tool: "pktseer".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            config_file: None,
            settings: BTreeMap::new(),
            seed: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            logs: Vec::new(),
            counters: BTreeMap::new(),
            started_at: now(),
            finished_at: None,
            status: "running".into(),
            error: None,
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.input_digest(path, sha256_hex(bytes), bytes.len() as u64);
    }

    pub fn input_digest(&mut self, path: &Path, sha256: String, bytes: u64) {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
            bytes,
        });
    }

    /// Hashes a written file and lists it.
    pub fn artifact(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::read(path, e))?;
        self.artifact_digest(path, sha256_hex(&bytes), bytes.len() as u64);
        Ok(())
    }

    pub fn artifact_digest(&mut self, path: &Path, sha256: String, bytes: u64) {
        self.artifacts.push(FileDigest {
            path: path.display().to_string(),
            sha256,
            bytes,
        });
    }

    pub fn log(&mut self, path: &Path) {
        self.logs.push(path.display().to_string());
    }

    pub fn count<T: Serialize>(&mut self, key: &str, v: T) {
        self.counters
            .insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn finish(&mut self, result: &Result<(), CliError>) {
        self.finished_at = Some(now());
        match result {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "error".into();
                self.error = Some(ErrorRecord {
                    kind: e.kind().into(),
                    exit_code: e.exit_code(),
                    message: e.to_string(),
                });
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::data(e.to_string()))?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

/// Writes a whole file, creating missing parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::write(path, e))
}

/// Passes reads through while hashing them.
pub struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
    bytes: u64,
}

impl<R: Read> HashingReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            hasher: Sha256::new(),
            bytes: 0,
        }
    }

    pub fn finish(self) -> (String, u64) {
        (hex::encode(self.hasher.finalize()), self.bytes)
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }
}

/// Passes writes through while hashing them.
pub struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
    bytes: u64,
}

impl<W: Write> HashingWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: Sha256::new(),
            bytes: 0,
        }
    }

    pub fn finish(self) -> (String, u64) {
        (hex::encode(self.hasher.finalize()), self.bytes)
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}
