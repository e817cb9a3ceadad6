//! Run manifest: hashes of the configuration, inputs and outputs plus
//! timing. It is the only artifact whose content varies between identical
//! runs, unless `SOURCE_DATE_EPOCH` pins the clock.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub stages: Vec<StageTiming>,
    /// Clock value from `SOURCE_DATE_EPOCH`; durations are then zero.
    #[serde(skip)]
    pinned: Option<u64>,
}

fn pinned_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok())
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64, workers: usize) -> Self {
        let pinned = pinned_epoch();
        let started = pinned.unwrap_or_else(now_unix);
        RunManifest {
            command: command.to_string(),
            engine_version: ENGINE_VERSION,
            config_hash,
            seed,
            workers,
            started_unix: started,
            finished_unix: started,
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
            pinned,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(FileHash { path: path.display().to_string(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Hashes of in-memory inputs such as the packaged data files.
    pub fn add_input_bytes(&mut self, label: &str, bytes: &[u8]) {
        self.inputs.push(FileHash { path: label.to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
    }

    /// Records an output path; hashes are computed in [`Self::write`].
    pub fn add_output(&mut self, path: PathBuf) {
        self.outputs.push(FileHash { path: path.display().to_string(), sha256: String::new() });
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let out = f(self)?;
        let seconds = if self.pinned.is_some() { 0.0 } else { start.elapsed().as_secs_f64() };
        self.stages.push(StageTiming { stage: stage.to_string(), seconds });
        Ok(out)
    }

    /// Hashes every recorded output and writes `manifest.json` in `dir`.
    pub fn write(mut self, dir: &Path) -> CliResult<PathBuf> {
        for o in &mut self.outputs {
            o.sha256 = sha256_file(Path::new(&o.path))?;
        }
        self.finished_unix = self.pinned.unwrap_or_else(now_unix);
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self).expect("manifest serialises");
        crate::csvio::write_text(&path, &(json + "\n"))?;
        Ok(path)
    }
}
