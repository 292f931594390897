//! Configuration, orchestration and persistence for the `penspde` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::commands::CommandOutput;
use crate::config::ExperimentConfig;
use crate::manifest::{DerivedQuantities, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

/// Result of a completed command after its files were written.
#[derive(Debug)]
pub struct Completed {
    pub manifest: RunManifest,
    pub violation: Option<String>,
}

/// Runs `work`, writes its outputs into `dir` and the manifest last.
pub fn execute(
    command: &str,
    cfg: &ExperimentConfig,
    dir: &Path,
    work: impl FnOnce() -> Result<CommandOutput, CliError>,
) -> Result<Completed, CliError> {
    let start = Instant::now();
    let out = work()?;
    let outputs = out.outputs.write(dir)?;
    let noise = cfg.noise_model(&cfg.mesh())?;
    let manifest = RunManifest {
        command: command.to_string(),
        library_version: penspde::VERSION.to_string(),
        config: cfg.clone(),
        derived: DerivedQuantities::for_config(cfg, noise.as_ref()),
        summary: out.summary,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(dir.join("manifest.json"), bytes)?;
    Ok(Completed {
        manifest,
        violation: out.violation,
    })
}
