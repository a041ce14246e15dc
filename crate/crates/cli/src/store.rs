//! Stage directories: atomic file writes and the manifest that records the
//! config hash, seed and content hashes of inputs and outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, PipelineConfig};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Reads a declared input; a missing file names the stage that makes it.
pub fn read_input(path: &Path, producer: Option<&str>) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::missing(path, producer.map(|p| format!("run `{p}` first")))
        } else {
            CliError::io(path, e)
        }
    })
}

pub fn read_text(path: &Path, producer: Option<&str>) -> Result<String> {
    String::from_utf8(read_input(path, producer)?).map_err(|_| CliError::format(path, "not valid UTF-8"))
}

/// Output directory of one stage.
pub struct StageDir {
    root: PathBuf,
    dir: PathBuf,
    stage: String,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl StageDir {
    /// Opens `<out>/<name>`, removing the outputs a previous run recorded.
    pub fn open(out: &Path, name: &str, stage: &str) -> Result<Self> {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let previous = dir.join(MANIFEST);
        if let Ok(bytes) = fs::read(&previous) {
            if let Ok(m) = serde_json::from_slice::<Manifest>(&bytes) {
                for f in m.outputs {
                    let p = dir.join(&f.path);
                    if p.starts_with(&dir) && p.is_file() {
                        fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
                    }
                }
            }
        }
        Ok(Self {
            root: out.to_path_buf(),
            dir,
            stage: stage.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Records an input by content hash. Paths under the output root are
    /// stored relative to it.
    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        let shown = path
            .strip_prefix(&self.root)
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .unwrap_or_else(|_| path.to_string_lossy().into_owned());
        self.inputs.push(FileHash {
            path: shown,
            sha256: sha256_hex(bytes),
        });
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        atomic_write(&self.dir.join(file), bytes)?;
        self.outputs.push(FileHash {
            path: file.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serialisable value");
        bytes.push(b'\n');
        self.write(file, &bytes)
    }

    pub fn finish(mut self, config: &PipelineConfig) -> Result<Manifest> {
        self.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            stage: self.stage.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("serialisable manifest");
        bytes.push(b'\n');
        atomic_write(&self.dir.join(MANIFEST), &bytes)?;
        Ok(manifest)
    }
}
