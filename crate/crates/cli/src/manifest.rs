//! Run manifest: written as `manifest.json` before a run starts and
//! rewritten with its outcome when it ends. Passing the manifest back as
//! `--config` reproduces the run.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub noise_seed: u64,
    pub noise_replicate: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub started_unix: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    /// Scheme steps taken, when the command counts them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds_per_step: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub threads: usize,
    pub seeds: Seeds,
    pub config: Config,
    pub outputs: Vec<PathBuf>,
    pub timings: Timings,
    #[serde(skip)]
    clock: Option<Instant>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn begin(command: &str, config: &Config, threads: usize) -> Self {
        Self {
            tool: "macf",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            status: Status::Running,
            exit_code: None,
            message: None,
            threads,
            seeds: Seeds {
                noise_seed: config.noise.seed,
                noise_replicate: config.noise.replicate,
            },
            config: config.clone(),
            outputs: Vec::new(),
            timings: Timings {
                started_unix: unix_now(),
                finished_unix: None,
                wall_seconds: None,
                steps: None,
                seconds_per_step: None,
            },
            clock: Some(Instant::now()),
        }
    }

    pub fn finish(&mut self, exit_code: i32, message: Option<String>, steps: Option<u64>) {
        self.status = if exit_code == 0 { Status::Completed } else { Status::Failed };
        self.exit_code = Some(exit_code);
        self.message = message;
        let wall = self.clock.map_or(0.0, |c| c.elapsed().as_secs_f64());
        self.timings.finished_unix = Some(unix_now());
        self.timings.wall_seconds = Some(wall);
        self.timings.steps = steps;
        self.timings.seconds_per_step = steps.filter(|&s| s > 0).map(|s| wall / s as f64);
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)
    }
}
