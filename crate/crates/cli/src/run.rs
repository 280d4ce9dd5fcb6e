//! Run directories: atomic artifact writes plus one append-only
//! `manifest.jsonl` per directory.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const RUN_ROOT_ENV: &str = "IFNAS_RUN_ROOT";
pub const MANIFEST: &str = "manifest.jsonl";

/// Git-style content hash: SHA-256 over `blob <len>\0<content>`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing into {}", dir.display()))?;
    tmp.write_all(content)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    command: &'a str,
    argv: Vec<String>,
    config: &'a serde_json::Value,
    seeds: &'a [u64],
    input_hash: &'a str,
    started_unix: u64,
    finished_unix: u64,
    status: &'a str,
    exit_code: u8,
    outputs: &'a [String],
    details: &'a serde_json::Value,
}

/// One command invocation bound to its output directory.
pub struct Run {
    dir: PathBuf,
    command: &'static str,
    config: serde_json::Value,
    seeds: Vec<u64>,
    input_hash: String,
    started: u64,
    outputs: Vec<String>,
    pub details: serde_json::Value,
}

impl Run {
    /// `out` wins; otherwise `$IFNAS_RUN_ROOT` (default `runs`) joined with
    /// the command name and a prefix of the input hash.
    pub fn open(command: &'static str, out: Option<&Path>, config: serde_json::Value, seeds: Vec<u64>) -> Result<Self> {
        let snapshot = serde_json::to_vec(&serde_json::json!({ "command": command, "config": config, "seeds": seeds }))?;
        let input_hash = content_hash(&snapshot);
        let dir = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let root = std::env::var_os(RUN_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
                root.join(format!("{command}-{}", &input_hash[..12]))
            }
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
        Ok(Run {
            dir,
            command,
            config,
            seeds,
            input_hash,
            started: unix_now(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `rel` inside the run directory and records it as an output.
    pub fn write(&mut self, rel: impl AsRef<Path>, content: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(rel.as_ref());
        write_atomic(&path, content.as_ref())?;
        let name = rel.as_ref().to_string_lossy().replace('\\', "/");
        if !self.outputs.contains(&name) {
            self.outputs.push(name);
        }
        Ok(path)
    }

    /// Appends this invocation to the manifest.
    pub fn close(self, exit_code: u8) -> Result<()> {
        let entry = ManifestEntry {
            command: self.command,
            argv: std::env::args().collect(),
            config: &self.config,
            seeds: &self.seeds,
            input_hash: &self.input_hash,
            started_unix: self.started,
            finished_unix: unix_now(),
            status: if exit_code == 0 { "ok" } else { "failed" },
            exit_code,
            outputs: &self.outputs,
            details: &self.details,
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let path = self.dir.join(MANIFEST);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        f.write_all(line.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_blob_hash_is_stable() {
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
