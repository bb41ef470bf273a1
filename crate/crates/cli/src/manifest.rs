use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::Command;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a command; written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Command,
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch. Not part of the reproduced output.
    pub timestamp: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(config: &Command, outputs: Vec<String>) -> Self {
        Self {
            command: config.name().to_string(),
            config: config.clone(),
            seed: config.seed(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{} is not a run manifest: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Collects the files a command writes into its output directory.
pub struct Sink {
    dir: PathBuf,
    files: Vec<String>,
}

impl Sink {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.record(name);
        Ok(path)
    }

    /// Register a file written by other means.
    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn into_files(self) -> Vec<String> {
        self.files
    }
}

/// Byte comparison of every recorded output in two directories.
pub fn compare_outputs(outputs: &[String], a: &Path, b: &Path) -> Result<(), CliError> {
    for name in outputs {
        let (pa, pb) = (a.join(name), b.join(name));
        let read = |p: &Path| {
            fs::read(p).map_err(|e| CliError::Mismatch(format!("{}: {e}", p.display())))
        };
        if read(&pa)? != read(&pb)? {
            return Err(CliError::Mismatch(format!("{name} differs")));
        }
    }
    Ok(())
}
