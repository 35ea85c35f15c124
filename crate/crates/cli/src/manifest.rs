use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Everything needed to re-run a command: its full configuration, seeds and
/// the files it produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub argv: Vec<String>,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    pub workers: usize,
    pub started_unix_secs: u64,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(command: &'static str, config: &impl Serialize) -> Self {
        RunManifest {
            schema_version: 1,
            tool: "rpca",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            seeds: Vec::new(),
            artifacts: Vec::new(),
            workers: rayon::current_num_threads(),
            started_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_time_secs: 0.0,
        }
    }

    pub fn seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn artifact(mut self, path: PathBuf) -> Self {
        self.artifacts.push(path);
        self
    }

    pub fn finish(mut self, start: Instant) -> Self {
        self.wall_time_secs = start.elapsed().as_secs_f64();
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
